#pragma once

#include <vector>

#include "swarmdiff/common/types.hpp"

namespace swarmdiff::env {

/// Convex obstacle with counter-clockwise vertices.
///
/// Construction validates convexity and non-degeneracy; clockwise input is
/// reversed so the stored order is always counter-clockwise.
class ConvexPolygon {
 public:
  explicit ConvexPolygon(Points vertices);

  const Points& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  double area() const;
  Vec2 centroid() const;
  Vec2 min_corner() const;
  Vec2 max_corner() const;

  /// Closed containment (boundary counts as inside).
  bool contains(const Vec2& p) const;
  /// Euclidean distance from p to the polygon boundary.
  double boundary_distance(const Vec2& p) const;
  /// Negative inside, positive outside, zero on the boundary.
  double signed_distance(const Vec2& p) const;

 private:
  Points vertices_;
};

/// Distance between two convex polygons; 0 when they touch or overlap.
double polygon_distance(const ConvexPolygon& a, const ConvexPolygon& b);

/// Point-to-segment distance.
double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

/// Bounded rectangular workspace [0,width] x [0,height] with convex obstacles.
class Workspace {
 public:
  Workspace(double width, double height, std::vector<ConvexPolygon> obstacles = {},
            bool boundary_is_obstacle = false);

  double width() const { return width_; }
  double height() const { return height_; }
  const std::vector<ConvexPolygon>& obstacles() const { return obstacles_; }
  bool boundary_is_obstacle() const { return boundary_is_obstacle_; }

  bool in_bounds(const Vec2& p) const;
  /// Free-space distances are capped at max(width, height).
  double distance_cap() const;
  /// Exact signed distance: pointwise minimum of per-obstacle SDFs (union
  /// semantics), optionally including the four boundary half-planes, capped.
  double signed_distance(const Vec2& p) const;

  bool operator==(const Workspace& other) const;

 private:
  double width_;
  double height_;
  std::vector<ConvexPolygon> obstacles_;
  bool boundary_is_obstacle_;
};

}  // namespace swarmdiff::env
