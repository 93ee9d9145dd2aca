#pragma once

#include <string>
#include <vector>

#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/common/types.hpp"
#include "swarmdiff/env/workspace.hpp"

namespace swarmdiff::env {

/// Result of an SDF query: interpolated distance and unit normal.
struct SdfSample {
  double distance;
  Vec2 normal;
};

/// SdfSample plus the exact derivative of the bilinear distance interpolant,
/// used for analytic cost gradients.
struct SdfJet {
  double distance;
  Vec2 normal;
  Vec2 distance_gradient;
};

/// Cell-centred Euclidean signed distance field over the workspace rectangle.
///
/// Values are stored at cell centres `origin + (i + 0.5, j + 0.5) * resolution`
/// in row-major order (row = y index). Per-cell gradients are central
/// differences of the stored values, normalized to unit length.
class EsdfGrid {
 public:
  EsdfGrid(double resolution, Vec2 origin, int nx, int ny, Vec2 extent, std::vector<double> values,
           std::vector<Vec2> gradients);

  double resolution() const { return resolution_; }
  const Vec2& origin() const { return origin_; }
  /// Queryable rectangle is [origin, origin + extent].
  const Vec2& extent() const { return extent_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }

  double value(int i, int j) const { return values_[index(i, j)]; }
  const Vec2& gradient(int i, int j) const { return gradients_[index(i, j)]; }
  Vec2 cell_center(int i, int j) const;
  const std::vector<double>& values() const { return values_; }
  const std::vector<Vec2>& gradients() const { return gradients_; }

  bool contains(const Vec2& p) const;

  /// Bilinear interpolation of values and gradients. Throws DomainError
  /// outside the workspace rectangle.
  SdfSample query(const Vec2& p) const;
  SdfJet query_jet(const Vec2& p) const;

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(i);
  }

  double resolution_;
  Vec2 origin_;
  int nx_;
  int ny_;
  Vec2 extent_;
  std::vector<double> values_;
  std::vector<Vec2> gradients_;
};

/// Samples the exact workspace SDF at every cell centre. The OpenMP path
/// splits rows across threads; the serial path is the reference.
EsdfGrid build_esdf(const Workspace& ws, double resolution, Exec exec = Exec::parallel);

SdfSample query_sdf(const EsdfGrid& grid, const Vec2& p);

/// Binary export: "ESDF", u32 version, u32 nx, u32 ny, f64 resolution,
/// f64 origin x, f64 origin y, then nx*ny f32 values (row-major) and nx*ny
/// f32 (gx, gy) pairs. Little-endian.
std::vector<char> encode_esdf(const EsdfGrid& grid);
EsdfGrid decode_esdf(const std::vector<char>& bytes);
void write_esdf(const std::string& path, const EsdfGrid& grid);
EsdfGrid read_esdf(const std::string& path);

inline constexpr std::uint32_t kEsdfVersion = 1;
inline constexpr std::size_t kEsdfHeaderBytes = 40;

}  // namespace swarmdiff::env
