#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmdiff/gaussian/gaussian.hpp"

namespace swarmdiff::gauss {

/// Diagonal jitter [m^2] added to an EM covariance whose smallest eigenvalue
/// falls below it.
inline constexpr double kEmJitter = 1e-6;

/// Weighted Gaussian mixture. Weights are nonnegative and sum to 1 (1e-9).
class Gmm {
 public:
  Gmm(std::vector<GaussianState> components, std::vector<double> weights);

  std::size_t size() const { return components_.size(); }
  const std::vector<GaussianState>& components() const { return components_; }
  const std::vector<double>& weights() const { return weights_; }
  const GaussianState& component(std::size_t i) const { return components_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }

  /// log N(p; component i), without the mixture weight.
  double component_log_density(std::size_t i, const Vec2& p) const;
  double log_density(const Vec2& p) const;
  /// Posterior component probabilities at p.
  std::vector<double> responsibilities(const Vec2& p) const;
  /// Squared Mahalanobis distance of p to component i.
  double mahalanobis2(std::size_t i, const Vec2& p) const;

  bool operator==(const Gmm&) const = default;

 private:
  std::vector<GaussianState> components_;
  std::vector<double> weights_;
};

struct EmOptions {
  int max_iterations = 300;
  double tolerance = 1e-10;  ///< stop when the per-point log-likelihood gain drops below this
};

struct EmResult {
  Gmm gmm;
  /// Mean per-point log-likelihood evaluated at the start of each iteration,
  /// plus the final value.
  std::vector<double> log_likelihood;
};

/// EM with k-means++ seeding. Deterministic for a fixed seed.
EmResult fit_gmm_em_traced(std::span<const Vec2> points, int k, std::uint64_t seed,
                           const EmOptions& options = {});
Gmm fit_gmm_em(std::span<const Vec2> points, int k, std::uint64_t seed,
               const EmOptions& options = {});

/// Draws n points: component by weight, then mu + L z with L the Cholesky
/// factor of the component covariance.
Points sample_gmm(const Gmm& gmm, std::size_t n, std::uint64_t seed);

void to_json(nlohmann::json& j, const Gmm& g);
Gmm gmm_from_json(const nlohmann::json& j);

}  // namespace swarmdiff::gauss
