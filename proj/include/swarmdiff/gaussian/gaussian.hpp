#pragma once

#include <nlohmann/json.hpp>

#include "swarmdiff/common/types.hpp"

namespace swarmdiff::gauss {

/// Lower bound on standard deviations [m].
inline constexpr double kMinSigma = 1e-4;
/// Bound on |rho| so every covariance stays strictly positive definite.
inline constexpr double kMaxAbsRho = 1.0 - 1e-6;

/// One macroscopic node [x, y, sigma_x, sigma_y, rho].
struct GaussianState {
  double x = 0.0;
  double y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;

  Vec2 mean() const { return {x, y}; }
  Mat2 covariance() const;
  Vec5 to_vector() const;

  static GaussianState from_vector(const Vec5& v);
  /// Inverse of covariance(); the result is projected into the admissible
  /// parameter box (sigma >= kMinSigma, |rho| <= kMaxAbsRho).
  static GaussianState from_covariance(const Vec2& mean, const Mat2& cov);

  bool valid() const;
  /// Throws DomainError naming the violated bound.
  void validate() const;
  GaussianState clamped() const;

  bool operator==(const GaussianState&) const = default;
};

/// Closed-form square root of a 2x2 SPD matrix:
/// S = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M)).
Mat2 spd_sqrt(const Mat2& m);

/// Smallest eigenvalue of a symmetric 2x2 matrix.
double min_eigenvalue(const Mat2& m);

/// Wasserstein-2 distance between two Gaussians.
double wasserstein2(const GaussianState& a, const GaussianState& b);

struct W2Jet {
  double value = 0.0;
  Vec5 d_first = Vec5::Zero();   ///< dW/d(a) in [x, y, sx, sy, rho] order
  Vec5 d_second = Vec5::Zero();  ///< dW/d(b)
};

/// Value and analytic gradient. The gradient is set to zero where W2 vanishes
/// (the distance is not differentiable there).
W2Jet wasserstein2_jet(const GaussianState& a, const GaussianState& b);

/// T(p) = A p + b, pushing one Gaussian onto another.
struct AffineMap {
  Mat2 A = Mat2::Identity();
  Vec2 b = Vec2::Zero();

  Vec2 apply(const Vec2& p) const { return A * p + b; }
};

/// Optimal transport map between Gaussians:
/// A = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2}, T(x) = mu2 + A (x - mu1).
AffineMap ot_map(const GaussianState& from, const GaussianState& to);

void to_json(nlohmann::json& j, const GaussianState& g);
void from_json(const nlohmann::json& j, GaussianState& g);

}  // namespace swarmdiff::gauss
