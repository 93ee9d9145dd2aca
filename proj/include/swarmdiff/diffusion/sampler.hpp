#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/costs/costs.hpp"
#include "swarmdiff/diffusion/model.hpp"

namespace swarmdiff::diffusion {

struct GuidanceConfig {
  double weight = 1.0;     ///< 0 gives plain ancestral sampling
  double node_clip = 1.0;  ///< max norm of the normalized per-node gradient before weighting; 0 disables
  /// Clamp of the implied clean-sample estimate (normalized units) before the
  /// posterior mean is formed; 0 disables and leaves the plain eps formula.
  double x0_clip = 5.0;
  /// Extra cost-descent steps on the final sample, each moving the normalized
  /// nodes by final_step_size * g (clipped per node). 0 disables.
  int final_steps = 0;
  double final_step_size = 0.0;

  void validate() const;
  bool operator==(const GuidanceConfig&) const = default;
};

void to_json(nlohmann::json& j, const GuidanceConfig& g);
void from_json(const nlohmann::json& j, GuidanceConfig& g);

/// Endpoint pair plus the precomputed ESDF features for its chord.
struct SampleRequest {
  gauss::GaussianState start;
  gauss::GaussianState goal;
  Eigen::VectorXd esdf_features;
};

SampleRequest make_request(const gauss::GaussianState& start, const gauss::GaussianState& goal,
                           const env::EsdfGrid& grid);

struct SampleStats {
  int out_of_bounds = 0;  ///< posterior means projected back into the grid
};

/// Normalized-space cost guidance at posterior mean mu_z for step t:
/// weight * posterior_variance(t) * J(mu_z) * g, where g = cost_gradient at
/// the denormalized mean and J the diagonal denormalization Jacobian. Rows
/// for the two endpoints are zero.
NodeArray guidance_delta(const NodeArray& mu_z, int t, const DiffusionModel& model, const env::EsdfGrid& grid,
                         const costs::CostWeights& weights, const costs::GpModel& gp, const GuidanceConfig& guidance,
                         int* out_of_bounds = nullptr);

/// Posterior mean of one reverse step. With x0_clip > 0 the implied clean
/// sample is clamped to [-x0_clip, x0_clip] first; otherwise this is exactly
/// posterior_mean(z, eps, t).
NodeArray reverse_mean(const NodeArray& z, const NodeArray& eps, int t, const NoiseSchedule& schedule, double x0_clip);

/// K guided reverse-diffusion chains from standard-normal noise. Endpoints
/// are clamped to the normalized start and goal after every step and set to
/// the exact states in the output. Chain k draws its noise from
/// derive_seed(seed, sampling stream, k), so results do not depend on Exec.
std::vector<costs::GaussianTrajectory> guided_sample(const DiffusionModel& model, const SampleRequest& request,
                                                     const env::EsdfGrid& grid, const costs::CostWeights& weights,
                                                     const costs::GpModel& gp, const GuidanceConfig& guidance, int k,
                                                     std::uint64_t seed, SampleStats* stats = nullptr,
                                                     Exec exec = Exec::parallel);

}  // namespace swarmdiff::diffusion
