#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace swarmdiff::diffusion {

/// H x 5 node array in normalized coordinates.
using NodeArray = Eigen::Matrix<double, Eigen::Dynamic, 5, Eigen::RowMajor>;

/// Discrete DDPM schedule. Step indices t run from 1 to T; the arrays are
/// stored at t - 1.
class NoiseSchedule {
 public:
  /// Cosine alpha_bar schedule: f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2),
  /// beta_t = min(1 - f(t)/f(t-1), max_beta).
  static NoiseSchedule cosine(int steps, double offset = 0.008, double max_beta = 0.999);
  /// From explicit betas; validates 0 < beta < 1 and nondecreasing.
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }
  /// Variance of q(x_{t-1} | x_t, x_0); zero at t = 1.
  double posterior_variance(int t) const;
  const std::vector<double>& betas() const { return beta_; }

  /// Throws DomainError unless 1 <= t <= T.
  void check_step(int t) const;

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

void to_json(nlohmann::json& j, const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

struct Diffused {
  NodeArray noisy;
  NodeArray eps;
};

/// noisy = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, eps drawn from the seed.
Diffused forward_diffuse(const NodeArray& x0, int t, const NoiseSchedule& schedule, std::uint64_t seed);

/// Reverse-process mean 1/sqrt(alpha_t) (x_t - beta_t / sqrt(1 - abar_t) eps).
NodeArray posterior_mean(const NodeArray& noisy, const NodeArray& eps, int t, const NoiseSchedule& schedule);

/// x0 estimate (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
NodeArray predict_x0(const NodeArray& noisy, const NodeArray& eps, int t, const NoiseSchedule& schedule);

}  // namespace swarmdiff::diffusion
