#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmdiff/diffusion/denoiser.hpp"
#include "swarmdiff/diffusion/train.hpp"
#include "swarmdiff/env/scenario.hpp"
#include "swarmdiff/macro/planner.hpp"
#include "swarmdiff/micro/simulate.hpp"
#include "swarmdiff/prm/dataset.hpp"

namespace swarmdiff::harness {

struct ModelConfig {
  diffusion::DenoiserConfig denoiser;
  int diffusion_steps = 100;
  int horizon = 64;

  bool operator==(const ModelConfig&) const = default;
};

struct SwarmConfig {
  int robots = 20;
  double radius = 0.2;
  /// Endpoint component counts; 0 picks 3 for swarms of 20 or more, else 1.
  int n1 = 0;
  int n2 = 0;
  double spread = 1.2;  ///< [m] std of robot placement around each endpoint cluster centre

  int start_components() const;
  int goal_components() const;
  bool operator==(const SwarmConfig&) const = default;
};

struct BenchConfig {
  std::vector<int> sizes{10, 20, 50};
  std::vector<int> densities{3, 5, 8};  ///< obstacle counts
  int repeats = 3;

  bool operator==(const BenchConfig&) const = default;
};

/// Every tunable of the pipeline in one JSON document.
struct PlannerConfig {
  std::uint64_t seed = 1;
  env::ScenarioKind kind = env::ScenarioKind::dense_obstacles;
  env::ScenarioParams scenario;
  double esdf_resolution = 0.5;
  prm::PrmConfig prm;
  int dataset_count = 200;
  int attempts_per_round = 32;
  ModelConfig model;
  diffusion::TrainConfig train;
  macro::MacroParams macro;
  SwarmConfig swarm;
  micro::SimConfig sim;
  BenchConfig bench;

  /// Collects every invalid field and throws one ConfigError listing them all.
  void validate() const;
  prm::DatasetConfig dataset_config() const;
  bool operator==(const PlannerConfig&) const = default;
};

nlohmann::json config_to_json(const PlannerConfig& c);
/// Missing keys keep their defaults. Unknown top-level keys and type errors
/// are reported together with validation failures in one ConfigError.
PlannerConfig config_from_json(const nlohmann::json& j);
PlannerConfig load_config(const std::string& path);

/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const PlannerConfig& c);
/// Hash of the sections that shape the dataset (scene, roadmap, horizon).
std::string data_hash(const PlannerConfig& c);
/// Hash of the sections that shape the trained model (data plus model and
/// training settings).
std::string model_hash(const PlannerConfig& c);

}  // namespace swarmdiff::harness
