#pragma once

#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "swarmdiff/common/types.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/env/workspace.hpp"

namespace swarmdiff::micro {

struct RobotState {
  int id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double radius = 0.2;
};

struct MpcConfig {
  int horizon = 10;
  double dt = 0.1;
  double v_max = 2.0;
  double a_max = 4.0;
  double safety_margin = 0.1;
  double w_track = 1.0;
  double w_effort = 0.1;
  double orca_horizon = 2.0;      ///< [s] look-ahead of the reciprocal constraints
  double obstacle_horizon = 1.0;  ///< [s] closing speed toward an obstacle is at most gap / obstacle_horizon
  double neighbor_dist = 10.0;
  int max_neighbors = 10;
  /// [rad] clockwise turn of the preferred velocity when neighbors block it
  /// (right-hand rule); breaks symmetric jams.
  double deadlock_turn = 0.5;

  /// Throws DomainError naming the first invalid field.
  void validate() const;
  bool operator==(const MpcConfig&) const = default;
};

void to_json(nlohmann::json& j, const MpcConfig& c);
void from_json(const nlohmann::json& j, MpcConfig& c);

/// Velocity half-plane: feasible when det(direction, v - point) >= 0, i.e.
/// v lies to the left of the directed line.
struct HalfPlane {
  Vec2 point = Vec2::Zero();
  Vec2 direction = Vec2::UnitX();
};

/// Extra inflation [m] of the reciprocal radius so discrete-time execution
/// stays strictly outside the safety margin.
inline constexpr double kOrcaBuffer = 0.01;

/// Reciprocal constraint of `self` against `other`; each side takes half of
/// the velocity correction. Combined radius includes the safety margin and
/// kOrcaBuffer.
HalfPlane orca_half_plane(const RobotState& self, const RobotState& other, const MpcConfig& cfg);

/// Obstacle constraint from the ESDF sample at the robot position:
/// n . v >= (radius + margin - distance) / obstacle_horizon.
HalfPlane obstacle_half_plane(const RobotState& robot, const env::SdfSample& sdf, const MpcConfig& cfg);

/// Exact nearest boundary point of a convex obstacle: signed distance and the
/// unit direction in which it grows.
env::SdfSample polygon_sample(const env::ConvexPolygon& obstacle, const Vec2& p);

/// One obstacle_half_plane per obstacle closer than neighbor_dist, from the
/// exact polygon geometry. Each convex obstacle's distance is convex, so its
/// linearization never overestimates the gap.
std::vector<HalfPlane> obstacle_half_planes(const RobotState& robot, const env::Workspace& ws, const MpcConfig& cfg);

/// Keeps the robot inside the grid rectangle, shrunk by radius + margin.
std::vector<HalfPlane> boundary_half_planes(const RobotState& robot, const env::EsdfGrid& grid, const MpcConfig& cfg);

enum class StepStatus { tracked, relaxed, hard_stop };

struct VelocityProgram {
  Vec2 velocity = Vec2::Zero();
  StepStatus status = StepStatus::tracked;
};

/// Closest velocity to `preferred` inside |v| <= v_max, |v - current| <=
/// a_max dt and every half-plane. The first `hard_count` planes are never
/// relaxed; when the soft planes conflict, the largest soft violation is
/// minimized instead (status relaxed). If even the hard planes cannot be
/// met, the robot brakes at a_max (status hard_stop).
VelocityProgram solve_velocity(const Vec2& preferred, const Vec2& current, std::span<const HalfPlane> planes,
                               std::size_t hard_count, const MpcConfig& cfg);

/// Unconstrained tracking optimum over the velocity sequence:
/// argmin w_track sum_k |p_k - ref_k|^2 + w_effort sum_k |v_k - v_{k-1}|^2,
/// p_k = p_0 + dt sum_{l<=k} v_l, v_0 = current velocity. The reference is
/// padded with its last waypoint to the horizon.
class TrackingQp {
 public:
  explicit TrackingQp(const MpcConfig& cfg);
  std::vector<Vec2> solve(const Vec2& position, const Vec2& velocity, std::span<const Vec2> reference) const;

 private:
  MpcConfig cfg_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct MpcResult {
  Vec2 velocity = Vec2::Zero();
  StepStatus status = StepStatus::tracked;
};

/// One receding-horizon step: tracking optimum, then the first velocity is
/// projected onto the obstacle, boundary, reciprocal and kinematic
/// constraints. Neighbors are filtered to the nearest max_neighbors within
/// neighbor_dist (ties by id). If the neighbors cut the speed reachable under
/// the hard constraints alone (without the acceleration limit) by more than
/// half, the preference is turned
/// clockwise by deadlock_turn and projected again. With `ws` the obstacle
/// constraints come from obstacle_half_planes; otherwise from the ESDF
/// sample at the robot position.
MpcResult mpc_step(const RobotState& robot, std::span<const Vec2> reference, std::span<const RobotState> neighbors,
                   const env::EsdfGrid& grid, const MpcConfig& cfg);
MpcResult mpc_step(const RobotState& robot, std::span<const Vec2> reference, std::span<const RobotState> neighbors,
                   const env::EsdfGrid& grid, const MpcConfig& cfg, const TrackingQp& qp,
                   const env::Workspace* ws = nullptr);

}  // namespace swarmdiff::micro
