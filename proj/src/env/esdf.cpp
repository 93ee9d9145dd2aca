#include "swarmdiff/env/esdf.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "swarmdiff/common/binary_io.hpp"
#include "swarmdiff/common/error.hpp"

namespace swarmdiff::env {
namespace {

Vec2 unit_or_default(const Vec2& g) {
  const double n = g.norm();
  if (!(n > 1e-12) || !std::isfinite(n)) return Vec2(1.0, 0.0);
  return g / n;
}

std::vector<Vec2> central_difference_gradients(const std::vector<double>& v, int nx, int ny,
                                               double res) {
  std::vector<Vec2> g(v.size());
  auto at = [&](int i, int j) { return v[static_cast<std::size_t>(j) * nx + i]; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int il = std::max(i - 1, 0), ir = std::min(i + 1, nx - 1);
      const int jd = std::max(j - 1, 0), ju = std::min(j + 1, ny - 1);
      const double gx = (at(ir, j) - at(il, j)) / (res * (ir - il));
      const double gy = (at(i, ju) - at(i, jd)) / (res * (ju - jd));
      g[static_cast<std::size_t>(j) * nx + i] = unit_or_default(Vec2(gx, gy));
    }
  }
  return g;
}

}  // namespace

EsdfGrid::EsdfGrid(double resolution, Vec2 origin, int nx, int ny, Vec2 extent,
                   std::vector<double> values, std::vector<Vec2> gradients)
    : resolution_(resolution),
      origin_(std::move(origin)),
      nx_(nx),
      ny_(ny),
      extent_(std::move(extent)),
      values_(std::move(values)),
      gradients_(std::move(gradients)) {
  if (!(resolution_ > 0.0) || nx_ < 2 || ny_ < 2) throw DomainError("invalid ESDF grid shape");
  const auto n = static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
  if (values_.size() != n || gradients_.size() != n) {
    throw DomainError("ESDF value/gradient arrays do not match grid shape");
  }
}

Vec2 EsdfGrid::cell_center(int i, int j) const {
  return origin_ + resolution_ * Vec2(i + 0.5, j + 0.5);
}

bool EsdfGrid::contains(const Vec2& p) const {
  const Vec2 q = p - origin_;
  return q.x() >= 0.0 && q.y() >= 0.0 && q.x() <= extent_.x() && q.y() <= extent_.y();
}

SdfJet EsdfGrid::query_jet(const Vec2& p) const {
  if (!contains(p) || !p.allFinite()) {
    std::ostringstream msg;
    msg << "SDF query at (" << p.x() << ", " << p.y() << ") outside grid bounds";
    throw DomainError(msg.str());
  }
  double gx = (p.x() - origin_.x()) / resolution_ - 0.5;
  double gy = (p.y() - origin_.y()) / resolution_ - 0.5;
  const bool clamp_x = gx < 0.0 || gx > nx_ - 1;
  const bool clamp_y = gy < 0.0 || gy > ny_ - 1;
  gx = std::clamp(gx, 0.0, static_cast<double>(nx_ - 1));
  gy = std::clamp(gy, 0.0, static_cast<double>(ny_ - 1));
  const int i0 = std::min(static_cast<int>(gx), nx_ - 2);
  const int j0 = std::min(static_cast<int>(gy), ny_ - 2);
  const double fx = gx - i0, fy = gy - j0;

  const double v00 = value(i0, j0), v10 = value(i0 + 1, j0);
  const double v01 = value(i0, j0 + 1), v11 = value(i0 + 1, j0 + 1);
  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;

  SdfJet jet;
  jet.distance = w00 * v00 + w10 * v10 + w01 * v01 + w11 * v11;
  jet.normal = unit_or_default(w00 * gradient(i0, j0) + w10 * gradient(i0 + 1, j0) +
                               w01 * gradient(i0, j0 + 1) + w11 * gradient(i0 + 1, j0 + 1));
  const double dx = clamp_x ? 0.0 : ((1 - fy) * (v10 - v00) + fy * (v11 - v01)) / resolution_;
  const double dy = clamp_y ? 0.0 : ((1 - fx) * (v01 - v00) + fx * (v11 - v10)) / resolution_;
  jet.distance_gradient = Vec2(dx, dy);
  return jet;
}

SdfSample EsdfGrid::query(const Vec2& p) const {
  const SdfJet jet = query_jet(p);
  return {jet.distance, jet.normal};
}

SdfSample query_sdf(const EsdfGrid& grid, const Vec2& p) { return grid.query(p); }

EsdfGrid build_esdf(const Workspace& ws, double resolution, Exec exec) {
  if (!(resolution > 0.0) || resolution > std::min(ws.width(), ws.height()) / 4.0) {
    throw DomainError("ESDF resolution must lie in (0, min(width, height)/4]");
  }
  const int nx = static_cast<int>(std::ceil(ws.width() / resolution - 1e-9));
  const int ny = static_cast<int>(std::ceil(ws.height() / resolution - 1e-9));
  std::vector<double> values(static_cast<std::size_t>(nx) * ny);

  auto fill_row = [&](int j) {
    for (int i = 0; i < nx; ++i) {
      const Vec2 c = resolution * Vec2(i + 0.5, j + 0.5);
      values[static_cast<std::size_t>(j) * nx + i] = ws.signed_distance(c);
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < ny; ++j) fill_row(j);
  } else {
    for (int j = 0; j < ny; ++j) fill_row(j);
  }

  auto gradients = central_difference_gradients(values, nx, ny, resolution);
  return EsdfGrid(resolution, Vec2::Zero(), nx, ny, Vec2(ws.width(), ws.height()),
                  std::move(values), std::move(gradients));
}

std::vector<char> encode_esdf(const EsdfGrid& grid) {
  binio::Writer w;
  w.put_raw("ESDF");
  w.put<std::uint32_t>(kEsdfVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.nx()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.ny()));
  w.put<double>(grid.resolution());
  w.put<double>(grid.origin().x());
  w.put<double>(grid.origin().y());
  for (double v : grid.values()) w.put<float>(static_cast<float>(v));
  for (const auto& g : grid.gradients()) {
    w.put<float>(static_cast<float>(g.x()));
    w.put<float>(static_cast<float>(g.y()));
  }
  return w.release();
}

EsdfGrid decode_esdf(const std::vector<char>& bytes) {
  binio::Reader r(bytes);
  if (r.get_raw(4) != "ESDF") throw IoError("bad ESDF magic at byte offset 0");
  const auto version = r.get<std::uint32_t>();
  if (version != kEsdfVersion) {
    throw IoError("unsupported ESDF version " + std::to_string(version) + " at byte offset 4");
  }
  const auto nx = static_cast<int>(r.get<std::uint32_t>());
  const auto ny = static_cast<int>(r.get<std::uint32_t>());
  const double res = r.get<double>();
  const double ox = r.get<double>();
  const double oy = r.get<double>();
  const auto n = static_cast<std::size_t>(nx) * ny;
  std::vector<double> values(n);
  std::vector<Vec2> grads(n);
  for (auto& v : values) v = r.get<float>();
  for (auto& g : grads) {
    const double gx = r.get<float>();
    const double gy = r.get<float>();
    g = Vec2(gx, gy);
  }
  return EsdfGrid(res, Vec2(ox, oy), nx, ny, Vec2(nx * res, ny * res), std::move(values),
                  std::move(grads));
}

void write_esdf(const std::string& path, const EsdfGrid& grid) {
  const auto bytes = encode_esdf(grid);
  binio::write_file(path, bytes);
}

EsdfGrid read_esdf(const std::string& path) { return decode_esdf(binio::read_file(path)); }

}  // namespace swarmdiff::env
