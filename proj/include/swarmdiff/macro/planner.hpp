#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/costs/costs.hpp"
#include "swarmdiff/diffusion/model.hpp"
#include "swarmdiff/diffusion/sampler.hpp"
#include "swarmdiff/gaussian/gmm.hpp"

namespace swarmdiff::macro {

using costs::GaussianTrajectory;

/// Macroscopic plan: K weighted Gaussian trajectories, one per positive
/// entry of the transport plan.
struct GmmTrajectory {
  std::vector<GaussianTrajectory> trajectories;
  std::vector<double> alphas;
  std::vector<std::pair<int, int>> pairs;  ///< (start component, goal component) of each trajectory
  Eigen::MatrixXd plan;                    ///< N1 x N2 transport matrix
  Eigen::MatrixXd costs;                   ///< N1 x N2 pair costs the plan was solved on
  gauss::Gmm start_gmm{{gauss::GaussianState{}}, {1.0}};
  gauss::Gmm goal_gmm{{gauss::GaussianState{}}, {1.0}};
  std::uint64_t seed = 0;
  std::string config_hash;

  std::size_t size() const { return trajectories.size(); }
  int horizon() const { return trajectories.empty() ? 0 : static_cast<int>(trajectories.front().size()); }
  /// Throws DomainError when alphas, plan marginals or shapes are inconsistent.
  void validate() const;
};

nlohmann::json plan_to_json(const GmmTrajectory& g);
GmmTrajectory plan_from_json(const nlohmann::json& j);

struct MacroParams {
  int samples_per_pair = 4;
  costs::CostWeights weights;
  double q_pos = 1.0;    ///< GP spectral density of the mean channels
  double q_shape = 0.1;  ///< GP spectral density of the shape channels
  /// Guided reverse chain plus 100 short cost-descent steps on the result.
  diffusion::GuidanceConfig guidance{4.0, 1.0, 5.0, 100, 0.05};
  double hard_cap = 10.0;  ///< largest collision_cost accepted for a pair's best trajectory
  double merge_threshold = 0.05;

  void validate() const;
  costs::GpModel gp_model(double dt) const;
  bool operator==(const MacroParams&) const = default;
};

void to_json(nlohmann::json& j, const MacroParams& p);
void from_json(const nlohmann::json& j, MacroParams& p);

/// L(i, j) = total_cost(trajs[(i, j)]). Throws PlanningError naming a
/// missing pair.
Eigen::MatrixXd pairwise_trajectory_costs(const std::map<std::pair<int, int>, GaussianTrajectory>& trajs, int n1,
                                          int n2, const env::EsdfGrid& grid, const costs::CostWeights& weights,
                                          const costs::GpModel& gp);

struct MacroStats {
  int out_of_bounds = 0;  ///< sampler projections summed over all chains
};

/// Best-of-samples_per_pair guided trajectory per component pair, LP over
/// the pair costs, and one trajectory per positive plan entry. Pair (i, j)
/// samples with seed derive_seed(seed, sampling stream, i * N2 + j).
/// Samples with a mean outside the grid are skipped. Throws PlanningError
/// naming an endpoint component that is not risk-feasible, or a pair with
/// no in-grid sample or whose best trajectory exceeds hard_cap.
GmmTrajectory plan_macro(const env::EsdfGrid& grid, const gauss::Gmm& start_gmm, const gauss::Gmm& goal_gmm,
                         const MacroParams& params, const diffusion::DiffusionModel& model, std::uint64_t seed,
                         MacroStats* stats = nullptr, Exec exec = Exec::parallel);

/// Mixture of the trajectories' states at t with weights alpha. Components
/// closer than merge_threshold in W2 to an earlier (merged) component are
/// folded into it by moment matching; 0 disables merging.
gauss::Gmm evaluate_gmm_at(const GmmTrajectory& g, int t, double merge_threshold);

/// Moment-matched single Gaussian of a weighted set.
gauss::GaussianState moment_match(const std::vector<gauss::GaussianState>& states, const std::vector<double>& weights);

}  // namespace swarmdiff::macro
