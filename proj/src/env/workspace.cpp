#include "swarmdiff/env/workspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::env {
namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double signed_area(const Points& v) {
  double a = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) a += cross(v[i], v[(i + 1) % v.size()]);
  return 0.5 * a;
}

// Separating-axis overlap test for convex polygons.
bool overlaps(const ConvexPolygon& a, const ConvexPolygon& b) {
  auto separated_by_edges_of = [](const ConvexPolygon& p, const ConvexPolygon& q) {
    const auto& v = p.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 e = v[(i + 1) % v.size()] - v[i];
      const Vec2 n(e.y(), -e.x());  // outward for CCW
      const double limit = n.dot(v[i]);
      bool all_outside = true;
      for (const auto& w : q.vertices()) {
        if (n.dot(w) <= limit) {
          all_outside = false;
          break;
        }
      }
      if (all_outside) return true;
    }
    return false;
  };
  return !separated_by_edges_of(a, b) && !separated_by_edges_of(b, a);
}

}  // namespace

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

ConvexPolygon::ConvexPolygon(Points vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) {
    throw DomainError("convex polygon needs at least 3 vertices, got " +
                      std::to_string(vertices_.size()));
  }
  const double area = signed_area(vertices_);
  if (std::abs(area) <= 1e-12) throw DomainError("degenerate polygon: zero area");
  if (area < 0.0) std::reverse(vertices_.begin(), vertices_.end());
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e0 = vertices_[(i + 1) % n] - vertices_[i];
    const Vec2 e1 = vertices_[(i + 2) % n] - vertices_[(i + 1) % n];
    if (cross(e0, e1) < -1e-12) throw DomainError("polygon is not convex");
  }
}

double ConvexPolygon::area() const { return signed_area(vertices_); }

Vec2 ConvexPolygon::centroid() const {
  Vec2 c = Vec2::Zero();
  const double a = area();
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    const Vec2& p = vertices_[i];
    const Vec2& q = vertices_[(i + 1) % vertices_.size()];
    c += (p + q) * cross(p, q);
  }
  return c / (6.0 * a);
}

Vec2 ConvexPolygon::min_corner() const {
  Vec2 m = vertices_.front();
  for (const auto& v : vertices_) m = m.cwiseMin(v);
  return m;
}

Vec2 ConvexPolygon::max_corner() const {
  Vec2 m = vertices_.front();
  for (const auto& v : vertices_) m = m.cwiseMax(v);
  return m;
}

bool ConvexPolygon::contains(const Vec2& p) const {
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(vertices_[(i + 1) % n] - vertices_[i], p - vertices_[i]) < 0.0) return false;
  }
  return true;
}

double ConvexPolygon::boundary_distance(const Vec2& p) const {
  double d = std::numeric_limits<double>::infinity();
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    d = std::min(d, segment_distance(p, vertices_[i], vertices_[(i + 1) % n]));
  }
  return d;
}

double ConvexPolygon::signed_distance(const Vec2& p) const {
  const double d = boundary_distance(p);
  return contains(p) ? -d : d;
}

double polygon_distance(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (overlaps(a, b)) return 0.0;
  double d = std::numeric_limits<double>::infinity();
  for (const auto& v : a.vertices()) d = std::min(d, b.boundary_distance(v));
  for (const auto& v : b.vertices()) d = std::min(d, a.boundary_distance(v));
  return d;
}

Workspace::Workspace(double width, double height, std::vector<ConvexPolygon> obstacles,
                     bool boundary_is_obstacle)
    : width_(width),
      height_(height),
      obstacles_(std::move(obstacles)),
      boundary_is_obstacle_(boundary_is_obstacle) {
  if (!(width_ > 0.0) || !(height_ > 0.0)) {
    throw DomainError("workspace extents must be positive");
  }
  for (std::size_t k = 0; k < obstacles_.size(); ++k) {
    for (const auto& v : obstacles_[k].vertices()) {
      if (v.x() < 0.0 || v.x() > width_ || v.y() < 0.0 || v.y() > height_) {
        throw DomainError("obstacle " + std::to_string(k) + " has a vertex outside the workspace");
      }
    }
  }
}

bool Workspace::in_bounds(const Vec2& p) const {
  return p.x() >= 0.0 && p.x() <= width_ && p.y() >= 0.0 && p.y() <= height_;
}

double Workspace::distance_cap() const { return std::max(width_, height_); }

double Workspace::signed_distance(const Vec2& p) const {
  double d = distance_cap();
  for (const auto& o : obstacles_) d = std::min(d, o.signed_distance(p));
  if (boundary_is_obstacle_) {
    d = std::min(d, std::min({p.x(), width_ - p.x(), p.y(), height_ - p.y()}));
  }
  return d;
}

bool Workspace::operator==(const Workspace& other) const {
  if (width_ != other.width_ || height_ != other.height_ ||
      boundary_is_obstacle_ != other.boundary_is_obstacle_ ||
      obstacles_.size() != other.obstacles_.size()) {
    return false;
  }
  for (std::size_t k = 0; k < obstacles_.size(); ++k) {
    if (obstacles_[k].vertices() != other.obstacles_[k].vertices()) return false;
  }
  return true;
}

}  // namespace swarmdiff::env
