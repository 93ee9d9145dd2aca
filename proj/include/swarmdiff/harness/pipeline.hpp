#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmdiff/diffusion/model.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/env/scenario.hpp"
#include "swarmdiff/harness/config.hpp"
#include "swarmdiff/macro/planner.hpp"
#include "swarmdiff/micro/simulate.hpp"
#include "swarmdiff/prm/dataset.hpp"

namespace swarmdiff::harness {

/// Monotonic wall clock in seconds.
double now_seconds();

env::Scenario make_scenario(const PlannerConfig& cfg, std::uint64_t seed);

/// Robot placement and the endpoint mixtures fitted to it.
struct Mission {
  env::Scenario scenario;
  double radius = 0.2;
  std::vector<Vec2> starts;
  std::vector<Vec2> goals;
  gauss::Gmm start_gmm{{gauss::GaussianState{}}, {1.0}};
  gauss::Gmm goal_gmm{{gauss::GaussianState{}}, {1.0}};
};

nlohmann::json mission_to_json(const Mission& m);
Mission mission_from_json(const nlohmann::json& j);

/// Cluster centres are uniform in the start (goal) strip; robots are drawn
/// round-robin from N(centre, spread^2 I) with rejection on obstacle
/// clearance and pairwise spacing. EM fits the endpoint mixtures, which are
/// then clamped into the sigma bounds. A side whose fitted components are not
/// all risk-feasible for the planner is redrawn (up to 100 rounds); after
/// that, or when the placement budget runs out, throws GenerationError.
Mission make_mission(const PlannerConfig& cfg, const env::Scenario& scenario, const env::EsdfGrid& grid,
                     std::uint64_t seed);

/// Untrained model: normalizer fitted on the dataset, cosine schedule,
/// initial weights from the train seed and the node spacing of the
/// subsampled training trajectories.
diffusion::DiffusionModel init_model(const PlannerConfig& cfg, const prm::Dataset& data);

struct TrainOutcome {
  diffusion::DiffusionModel model;
  std::uint64_t first_step = 0;
  std::vector<double> losses;
  bool diverged = false;
  std::string message;
};

/// Trains cfg.train.steps more steps, from `resume` when given. Throws
/// DomainError when the dataset horizon differs from the model horizon.
TrainOutcome train_model(const PlannerConfig& cfg, const prm::Dataset& data,
                         const diffusion::DiffusionModel* resume = nullptr,
                         const std::function<void(std::uint64_t, double)>& on_step = {}, Exec exec = Exec::parallel);

/// step,loss,moving_average (window 100) with one row per step.
std::string loss_curve_csv(const std::vector<double>& losses, std::uint64_t first_step);

struct PlanOutcome {
  macro::GmmTrajectory plan;
  double T_macro = 0.0;  ///< wall clock of plan_macro alone
  macro::MacroStats stats;
};

PlanOutcome plan_mission(const PlannerConfig& cfg, const diffusion::DiffusionModel& model, const Mission& mission,
                         const env::EsdfGrid& grid, std::uint64_t seed, Exec exec = Exec::parallel);

/// Plan file: the plan JSON with the mission under "mission".
nlohmann::json plan_file_json(const macro::GmmTrajectory& plan, const Mission& mission);
void write_plan_file(const std::string& path, const macro::GmmTrajectory& plan, const Mission& mission);
std::pair<macro::GmmTrajectory, Mission> read_plan_file(const std::string& path);

struct RunOutcome {
  micro::SwarmLog log;
  double T_micro = 0.0;
  micro::SimStats stats;
};

RunOutcome run_micro(const PlannerConfig& cfg, const macro::GmmTrajectory& plan, const Mission& mission,
                     const env::EsdfGrid& grid, std::uint64_t seed, Exec exec = Exec::parallel);

struct MetricsReport {
  double T_sol = 0.0;
  double T_macro = 0.0;
  double T_micro = 0.0;
  double D_bar = 0.0;
  double d_obs = 0.0;
  double d_rob = 0.0;
  bool success = false;
  std::uint64_t seed = 0;
  std::string config_hash;
  int robots = 0;
  int components = 0;      ///< K trajectories in the plan
  double D_lower = 0.0;    ///< mean straight-line distance from start to final position
  double model_load = 0.0; ///< [s] kept out of T_macro
  int steps = 0;
  int relaxed_steps = 0;
  int hard_stops = 0;
  int far_robots = 0;
};

/// T_sol is T_macro + T_micro.
MetricsReport make_report(const micro::SwarmLog& log, std::size_t components, double T_macro, double T_micro,
                          const std::string& config_hash);
nlohmann::json report_to_json(const MetricsReport& r);

/// Straight-line lower bound of D_bar: mean |final - first| position.
double straight_line_bound(const micro::SwarmLog& log);

}  // namespace swarmdiff::harness
