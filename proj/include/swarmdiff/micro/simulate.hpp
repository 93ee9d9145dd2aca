#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/env/workspace.hpp"
#include "swarmdiff/gaussian/gmm.hpp"
#include "swarmdiff/macro/planner.hpp"
#include "swarmdiff/micro/control.hpp"

namespace swarmdiff::micro {

enum class DestinationMode { stochastic, quota };

std::string to_string(DestinationMode m);
DestinationMode destination_mode_from_string(const std::string& s);

/// Squared Mahalanobis distance beyond which a robot counts as outside every
/// component and is associated by distance instead of responsibility.
inline constexpr double kFarMahalanobis2 = 36.0;

struct DensityTargets {
  std::vector<Vec2> targets;
  std::vector<int> source;       ///< associated component of gmm_now
  std::vector<int> destination;  ///< drawn component of gmm_next
  int far_robots = 0;            ///< robots associated by Mahalanobis fallback
};

/// Associates each robot with its most responsible component of gmm_now,
/// draws a destination from the normalized plan row and maps the position
/// through the Gaussian OT map between the two components. Robot k draws
/// from derive_seed(seed, density stream, k). Quota mode replaces the draws
/// by largest-remainder apportionment of each component's robots (in index
/// order). Throws DomainError when the plan marginals do not match the
/// weights within 1e-6.
DensityTargets density_targets(std::span<const RobotState> robots, const gauss::Gmm& gmm_now,
                               const gauss::Gmm& gmm_next, const Eigen::MatrixXd& plan, std::uint64_t seed,
                               DestinationMode mode = DestinationMode::stochastic);

struct SimConfig {
  MpcConfig mpc;
  double capture_radius = 0.5;
  /// Seconds per macroscopic index; 0 picks the smallest multiple of dt at
  /// which the fastest trajectory mean moves at cruise_fraction * v_max.
  double segment_time = 0.0;
  double cruise_fraction = 0.6;
  /// Step budget; 0 means the planned steps plus settle_steps.
  int max_steps = 0;
  int settle_steps = 1500;
  DestinationMode destinations = DestinationMode::stochastic;
  double process_noise = 0.0;  ///< [m / sqrt(s)] position noise per step

  void validate() const;
  bool operator==(const SimConfig&) const = default;
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

struct Frame {
  double t = 0.0;
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  double d_rob = 0.0;  ///< min centre distance minus both radii; +inf with one robot
  double d_obs = 0.0;  ///< min exact SDF minus radius

  bool operator==(const Frame&) const = default;
};

struct SwarmLog {
  std::vector<double> radii;
  double dt = 0.1;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<Frame> frames;
  std::vector<Vec2> final_targets;
  bool success = false;
  int relaxed_steps = 0;  ///< robot-steps where reciprocal constraints were relaxed
  int hard_stops = 0;     ///< robot-steps with no velocity meeting the obstacle constraints
  int far_robots = 0;     ///< density association fallbacks

  bool operator==(const SwarmLog&) const = default;
};

struct SimStats {
  double assignment_seconds = 0.0;
  int segments = 0;
  int segment_steps = 0;
};

std::vector<RobotState> robots_from_positions(std::span<const Vec2> positions, double radius);

/// Synchronous simulation of the swarm tracking the plan. Every step the
/// controllers read one snapshot; their velocities are applied together.
/// Logs a frame before the first step and after every step.
SwarmLog simulate(std::span<const RobotState> robots, const macro::GmmTrajectory& plan, const env::EsdfGrid& grid,
                  const env::Workspace& ws, const SimConfig& cfg, std::uint64_t seed, SimStats* stats = nullptr,
                  Exec exec = Exec::parallel);

/// JSON lines: a header, one line per frame, then a summary line.
std::string encode_log(const SwarmLog& log);
SwarmLog decode_log(const std::string& text);
void write_log(const std::string& path, const SwarmLog& log);
SwarmLog read_log(const std::string& path);

struct LogMetrics {
  double D_bar = 0.0;  ///< mean over robots of summed per-step displacement
  double d_obs = 0.0;
  double d_rob = 0.0;
  bool success = false;
  int steps = 0;
};

LogMetrics reduce_log(const SwarmLog& log);

}  // namespace swarmdiff::micro
