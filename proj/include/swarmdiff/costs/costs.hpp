#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/gaussian/gaussian.hpp"

namespace swarmdiff::costs {

using gauss::GaussianState;
using Vec10 = Eigen::Matrix<double, 10, 1>;
using Mat10 = Eigen::Matrix<double, 10, 10>;

/// Sequence of Gaussian nodes sampled every dt seconds.
struct GaussianTrajectory {
  std::vector<GaussianState> states;
  double dt = 1.0;

  std::size_t size() const { return states.size(); }
  /// Throws DomainError unless H >= 2, dt > 0 and every state is valid.
  void validate() const;
};

void to_json(nlohmann::json& j, const GaussianTrajectory& t);
void from_json(const nlohmann::json& j, GaussianTrajectory& t);

struct CostWeights {
  double lambda_obs = 1.0;
  double lambda_dis = 0.1;
  double lambda_gp = 0.01;
  double alpha = 0.1;    ///< CVaR risk level in (0, 1)
  double epsilon = 0.0;  ///< safety margin [m]

  void validate() const;
  bool operator==(const CostWeights&) const = default;
};

void to_json(nlohmann::json& j, const CostWeights& w);
void from_json(const nlohmann::json& j, CostWeights& w);

/// Constant-velocity Gaussian-process prior on the extended state
/// [x, y, vx, vy, sx, sy, rho, vsx, vsy, vrho].
///
/// Each channel/velocity pair gets a white-noise-on-acceleration block
/// qc * [[dt^3/3, dt^2/2], [dt^2/2, dt]] with qc = q_pos for x, y and
/// qc = q_shape for the three shape channels.
struct GpModel {
  Mat10 transition;
  Mat10 process_noise;
  Mat10 precision;
  double dt = 1.0;

  static GpModel constant_velocity(double dt, double q_pos, double q_shape);
};

/// Index of the velocity entry paired with channel c (0..4) in the extended state.
inline constexpr int kChannelIndex[5] = {0, 1, 4, 5, 6};
inline constexpr int kRateIndex[5] = {2, 3, 7, 8, 9};

double normal_pdf(double x);
/// Acklam's rational approximation refined by one Halley step; |error| < 1e-12
/// on (1e-300, 1 - 1e-16).
double normal_quantile(double p);
/// phi(Phi^{-1}(1 - alpha)) / alpha.
double cvar_multiplier(double alpha);

/// -s(mu) + cvar_multiplier(alpha) * n^T Sigma n, with n the ESDF normal at mu.
double cvar_collision(const GaussianState& state, const env::EsdfGrid& grid, double alpha);

double collision_cost(const GaussianTrajectory& traj, const env::EsdfGrid& grid, double alpha, double epsilon);
double transport_cost(const GaussianTrajectory& traj);

/// Lifts each node to the extended state with central differences (forward
/// and backward at the ends).
std::vector<Vec10> extended_states(const GaussianTrajectory& traj);
double gp_cost(const GaussianTrajectory& traj, const GpModel& model);

struct CostBreakdown {
  double collision = 0.0;
  double transport = 0.0;
  double gp = 0.0;
  double total = 0.0;
};

CostBreakdown evaluate_costs(const GaussianTrajectory& traj, const env::EsdfGrid& grid, const CostWeights& w,
                             const GpModel& model);
double total_cost(const GaussianTrajectory& traj, const env::EsdfGrid& grid, const CostWeights& w,
                  const GpModel& model);

using Gradient = std::vector<Vec5>;

/// Per-term gradients of the unweighted costs with respect to every node
/// coordinate [x, y, sx, sy, rho]. The collision term freezes the ESDF normal.
Gradient collision_gradient(const GaussianTrajectory& traj, const env::EsdfGrid& grid, double alpha, double epsilon);
Gradient transport_gradient(const GaussianTrajectory& traj);
Gradient gp_gradient(const GaussianTrajectory& traj, const GpModel& model);

/// Descent direction -sum_i lambda_i grad c_i, one 5-vector per node.
Gradient cost_gradient(const GaussianTrajectory& traj, const env::EsdfGrid& grid, const CostWeights& w,
                       const GpModel& model);

/// Batch kernels. Results are in input order and identical for both Exec modes.
std::vector<CostBreakdown> batch_costs(std::span<const GaussianTrajectory> trajs, const env::EsdfGrid& grid,
                                       const CostWeights& w, const GpModel& model, Exec exec = Exec::parallel);
std::vector<Gradient> batch_gradients(std::span<const GaussianTrajectory> trajs, const env::EsdfGrid& grid,
                                      const CostWeights& w, const GpModel& model, Exec exec = Exec::parallel);

}  // namespace swarmdiff::costs
