#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/diffusion/normalizer.hpp"
#include "swarmdiff/diffusion/train.hpp"
#include "swarmdiff/env/scenario.hpp"
#include "swarmdiff/prm/roadmap.hpp"

namespace swarmdiff::prm {

struct DatasetConfig {
  int count = 200;
  env::ScenarioKind kind = env::ScenarioKind::dense_obstacles;
  env::ScenarioParams scenario;
  PrmConfig prm;
  double esdf_resolution = 0.5;
  int horizon = 64;             ///< training view length
  int attempts_per_round = 32;  ///< attempts run in parallel before committing in order

  void validate() const;
  bool operator==(const DatasetConfig&) const = default;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

/// Start means are drawn from the left keepout strip and goal means from the
/// right one, inset by 3 sigma_max from the workspace border.
Box start_region(const env::ScenarioParams& p, const SigmaBounds& b);
Box goal_region(const env::ScenarioParams& p, const SigmaBounds& b);

struct DatasetRecord {
  std::uint64_t scene_seed = 0;
  GaussianTrajectory trajectory;  ///< path_nodes states, f32-representable
  Eigen::VectorXd features;       ///< diffusion::kEsdfFeatureDim ESDF chord features
};

struct Dataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<DatasetRecord> records;
};

struct DatasetStats {
  int attempts = 0;
  int failures = 0;
  std::map<std::string, int> failure_reasons;
};

/// Seed of the a-th scene attempt.
std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t attempt);

/// Plans one record for the scene drawn from scene_seed. Throws
/// GenerationError, SamplingError or PlanningError on failure.
DatasetRecord plan_record(const DatasetConfig& cfg, std::uint64_t scene_seed);

/// Runs attempts in rounds of cfg.attempts_per_round (parallel within a
/// round) and commits successes in attempt order until cfg.count records
/// exist. Aborts with GenerationError when more than 90 of the last 100
/// attempts failed. Output is identical for both Exec modes.
Dataset build_dataset(const DatasetConfig& cfg, std::uint64_t seed, const std::string& config_hash = "",
                      DatasetStats* stats = nullptr, Exec exec = Exec::parallel);

inline constexpr int kDatasetVersion = 1;

/// One JSON header line {"format": "swarmdiff-dataset", "version", "seed",
/// "config", "config_hash", "count", "nodes", "feature_dim", "horizon",
/// "record_bytes"} followed by count fixed-stride records: u64 scene seed,
/// nodes x 5 f32 states, feature_dim f32 features. Little-endian.
std::vector<char> encode_dataset(const Dataset& d);
Dataset decode_dataset(const std::vector<char>& bytes);
void write_dataset(const std::string& path, const Dataset& d);
Dataset read_dataset(const std::string& path);

struct ValidationReport {
  int records = 0;
  int failures = 0;
  std::vector<std::string> messages;  ///< one line per failing record

  bool ok() const { return failures == 0; }
};

/// Regenerates each record's scene and rechecks node validity, endpoint and
/// edge feasibility, and the stored features.
ValidationReport validate_dataset(const Dataset& d, Exec exec = Exec::parallel);

/// Records subsampled to the configured horizon.
std::vector<GaussianTrajectory> training_trajectories(const Dataset& d);
/// Normalized trajectories paired with their conditioning vectors.
std::vector<diffusion::TrainingExample> training_examples(const Dataset& d, const diffusion::Normalizer& n);

}  // namespace swarmdiff::prm
