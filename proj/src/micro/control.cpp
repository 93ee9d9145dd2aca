#include "swarmdiff/micro/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::micro {

void MpcConfig::validate() const {
  if (horizon < 1) throw DomainError("mpc horizon must be >= 1");
  if (!(dt > 0.0)) throw DomainError("mpc dt must be positive");
  if (!(v_max > 0.0)) throw DomainError("mpc v_max must be positive");
  if (!(a_max > 0.0)) throw DomainError("mpc a_max must be positive");
  if (!(safety_margin >= 0.0)) throw DomainError("mpc safety_margin must be nonnegative");
  if (!(w_track > 0.0)) throw DomainError("mpc w_track must be positive");
  if (!(w_effort >= 0.0)) throw DomainError("mpc w_effort must be nonnegative");
  if (!(orca_horizon > 0.0)) throw DomainError("mpc orca_horizon must be positive");
  if (!(obstacle_horizon >= dt)) throw DomainError("mpc obstacle_horizon must be >= dt");
  if (!(neighbor_dist > 0.0)) throw DomainError("mpc neighbor_dist must be positive");
  if (max_neighbors < 0) throw DomainError("mpc max_neighbors must be nonnegative");
  if (!(deadlock_turn >= 0.0 && deadlock_turn < 1.5)) throw DomainError("mpc deadlock_turn must lie in [0, 1.5)");
}

void to_json(nlohmann::json& j, const MpcConfig& c) {
  j = {{"horizon", c.horizon},
       {"dt", c.dt},
       {"v_max", c.v_max},
       {"a_max", c.a_max},
       {"safety_margin", c.safety_margin},
       {"w_track", c.w_track},
       {"w_effort", c.w_effort},
       {"orca_horizon", c.orca_horizon},
       {"obstacle_horizon", c.obstacle_horizon},
       {"neighbor_dist", c.neighbor_dist},
       {"max_neighbors", c.max_neighbors},
       {"deadlock_turn", c.deadlock_turn}};
}

void from_json(const nlohmann::json& j, MpcConfig& c) {
  const MpcConfig d;
  c.horizon = j.value("horizon", d.horizon);
  c.dt = j.value("dt", d.dt);
  c.v_max = j.value("v_max", d.v_max);
  c.a_max = j.value("a_max", d.a_max);
  c.safety_margin = j.value("safety_margin", d.safety_margin);
  c.w_track = j.value("w_track", d.w_track);
  c.w_effort = j.value("w_effort", d.w_effort);
  c.orca_horizon = j.value("orca_horizon", d.orca_horizon);
  c.obstacle_horizon = j.value("obstacle_horizon", d.obstacle_horizon);
  c.neighbor_dist = j.value("neighbor_dist", d.neighbor_dist);
  c.max_neighbors = j.value("max_neighbors", d.max_neighbors);
  c.deadlock_turn = j.value("deadlock_turn", d.deadlock_turn);
}

namespace {

constexpr double kParallelEps = 1e-12;

double det(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

HalfPlane plane_from_normal(const Vec2& n, double min_speed) {
  // n . v >= min_speed, feasible side on the left of (n.y, -n.x).
  return {n * min_speed, Vec2(n.y(), -n.x())};
}

/// Speed disc |v| <= r0 and acceleration disc |v - c1| <= r1.
struct Discs {
  double r0;
  Vec2 c1;
  double r1;

  bool contains(const Vec2& v) const {
    constexpr double tol = 1e-12;
    return v.norm() <= r0 * (1.0 + tol) + tol && (v - c1).norm() <= r1 * (1.0 + tol) + tol;
  }

  /// Intersection points of the two boundary circles (0 or 2).
  std::vector<Vec2> crossings() const {
    const double d = c1.norm();
    if (!(d > 0.0) || d > r0 + r1 || d < std::abs(r0 - r1)) return {};
    const double a = (r0 * r0 - r1 * r1 + d * d) / (2.0 * d);
    const double h = std::sqrt(std::max(0.0, r0 * r0 - a * a));
    const Vec2 e = c1 / d;
    const Vec2 base = a * e;
    const Vec2 perp(-e.y(), e.x());
    return {base + h * perp, base - h * perp};
  }

  Vec2 project(const Vec2& x) const {
    if (contains(x)) return x;
    std::vector<Vec2> cand;
    const double nx = x.norm();
    const Vec2 p0 = nx > r0 ? Vec2(x * (r0 / nx)) : x;
    if (contains(p0)) cand.push_back(p0);
    const double n1 = (x - c1).norm();
    const Vec2 p1 = n1 > r1 ? Vec2(c1 + (x - c1) * (r1 / n1)) : x;
    if (contains(p1)) cand.push_back(p1);
    for (const Vec2& c : crossings()) cand.push_back(c);
    if (cand.empty()) return c1;
    Vec2 best = cand.front();
    for (const Vec2& c : cand) {
      if ((c - x).squaredNorm() < (best - x).squaredNorm()) best = c;
    }
    return best;
  }

  Vec2 extreme(const Vec2& u) const {
    std::vector<Vec2> cand;
    const Vec2 p0 = r0 * u;
    if (contains(p0)) cand.push_back(p0);
    const Vec2 p1 = c1 + r1 * u;
    if (contains(p1)) cand.push_back(p1);
    for (const Vec2& c : crossings()) cand.push_back(c);
    if (cand.empty()) return c1;
    Vec2 best = cand.front();
    for (const Vec2& c : cand) {
      if (u.dot(c) > u.dot(best)) best = c;
    }
    return best;
  }
};

bool clip_to_disc(const Vec2& point, const Vec2& dir, const Vec2& center, double r, double& lo, double& hi) {
  const Vec2 rel = point - center;
  const double b = dir.dot(rel);
  const double disc = b * b + r * r - rel.squaredNorm();
  if (disc < 0.0) return false;
  const double s = std::sqrt(disc);
  lo = std::max(lo, -b - s);
  hi = std::min(hi, -b + s);
  return true;
}

/// Optimum on the boundary line of plane i subject to the discs and planes
/// [0, i).
bool program_1d(std::span<const HalfPlane> planes, std::size_t i, const Discs& discs, const Vec2& target,
                bool direction_mode, Vec2& result) {
  const HalfPlane& line = planes[i];
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  if (!clip_to_disc(line.point, line.direction, Vec2::Zero(), discs.r0, lo, hi)) return false;
  if (!clip_to_disc(line.point, line.direction, discs.c1, discs.r1, lo, hi)) return false;
  if (lo > hi) return false;
  for (std::size_t j = 0; j < i; ++j) {
    const double denom = det(line.direction, planes[j].direction);
    const double numer = det(planes[j].direction, line.point - planes[j].point);
    if (std::abs(denom) <= kParallelEps) {
      if (numer < 0.0) return false;
      continue;
    }
    const double t = numer / denom;
    if (denom >= 0.0) {
      hi = std::min(hi, t);
    } else {
      lo = std::max(lo, t);
    }
    if (lo > hi) return false;
  }
  double t;
  if (direction_mode) {
    t = target.dot(line.direction) > 0.0 ? hi : lo;
  } else {
    t = std::clamp(line.direction.dot(target - line.point), lo, hi);
  }
  result = line.point + t * line.direction;
  return true;
}

/// Returns planes.size() on success or the index of the first plane that
/// could not be satisfied (result then holds the optimum of the prefix).
std::size_t program_2d(std::span<const HalfPlane> planes, const Discs& discs, const Vec2& target,
                       bool direction_mode, Vec2& result) {
  result = direction_mode ? discs.extreme(target) : discs.project(target);
  for (std::size_t i = 0; i < planes.size(); ++i) {
    if (det(planes[i].direction, planes[i].point - result) > 0.0) {
      const Vec2 saved = result;
      if (!program_1d(planes, i, discs, target, direction_mode, result)) {
        result = saved;
        return i;
      }
    }
  }
  return planes.size();
}

/// Minimizes the largest violation of the soft planes [hard_count, n),
/// keeping the hard planes and the discs satisfied.
void program_relaxed(std::span<const HalfPlane> planes, std::size_t hard_count, std::size_t begin,
                     const Discs& discs, Vec2& result) {
  double violation = 0.0;
  for (std::size_t i = begin; i < planes.size(); ++i) {
    const HalfPlane& pi = planes[i];
    if (det(pi.direction, pi.point - result) <= violation) continue;
    std::vector<HalfPlane> projected(planes.begin(), planes.begin() + static_cast<std::ptrdiff_t>(hard_count));
    for (std::size_t j = hard_count; j < i; ++j) {
      const HalfPlane& pj = planes[j];
      HalfPlane line;
      const double d = det(pi.direction, pj.direction);
      if (std::abs(d) <= kParallelEps) {
        if (pi.direction.dot(pj.direction) > 0.0) continue;
        line.point = 0.5 * (pi.point + pj.point);
      } else {
        line.point = pi.point + (det(pj.direction, pi.point - pj.point) / d) * pi.direction;
      }
      line.direction = (pj.direction - pi.direction).normalized();
      projected.push_back(line);
    }
    const Vec2 saved = result;
    if (program_2d(projected, discs, Vec2(-pi.direction.y(), pi.direction.x()), true, result) < projected.size()) {
      result = saved;
    }
    violation = det(pi.direction, pi.point - result);
  }
}

Vec2 brake(const Vec2& current, double dv) {
  const double s = current.norm();
  if (s <= dv) return Vec2::Zero();
  return current * ((s - dv) / s);
}

}  // namespace

HalfPlane orca_half_plane(const RobotState& self, const RobotState& other, const MpcConfig& cfg) {
  const Vec2 rel_pos = other.position - self.position;
  const Vec2 rel_vel = self.velocity - other.velocity;
  const double dist2 = rel_pos.squaredNorm();
  const double r = self.radius + other.radius + cfg.safety_margin + kOrcaBuffer;
  const double r2 = r * r;
  HalfPlane line;
  Vec2 u;
  if (dist2 > r2) {
    const double inv_tau = 1.0 / cfg.orca_horizon;
    const Vec2 w = rel_vel - inv_tau * rel_pos;
    const double w2 = w.squaredNorm();
    const double dot1 = w.dot(rel_pos);
    if (dot1 < 0.0 && dot1 * dot1 > r2 * w2) {
      // Closest boundary point is on the cut-off circle.
      const double wl = std::sqrt(w2);
      const Vec2 unit = w / wl;
      line.direction = Vec2(unit.y(), -unit.x());
      u = (r * inv_tau - wl) * unit;
    } else {
      const double leg = std::sqrt(dist2 - r2);
      if (det(rel_pos, w) > 0.0) {
        line.direction = Vec2(rel_pos.x() * leg - rel_pos.y() * r, rel_pos.x() * r + rel_pos.y() * leg) / dist2;
      } else {
        line.direction = -Vec2(rel_pos.x() * leg + rel_pos.y() * r, -rel_pos.x() * r + rel_pos.y() * leg) / dist2;
      }
      u = rel_vel.dot(line.direction) * line.direction - rel_vel;
    }
  } else {
    // Already inside the inflated radius: separate within one step.
    const double inv_dt = 1.0 / cfg.dt;
    Vec2 w = rel_vel - inv_dt * rel_pos;
    double wl = w.norm();
    Vec2 unit = wl > 0.0 ? Vec2(w / wl) : Vec2(self.id < other.id ? 1.0 : -1.0, 0.0);
    line.direction = Vec2(unit.y(), -unit.x());
    u = (r * inv_dt - wl) * unit;
  }
  line.point = self.velocity + 0.5 * u;
  return line;
}

HalfPlane obstacle_half_plane(const RobotState& robot, const env::SdfSample& sdf, const MpcConfig& cfg) {
  const double gap = sdf.distance - robot.radius - cfg.safety_margin;
  return plane_from_normal(sdf.normal, -gap / cfg.obstacle_horizon);
}

env::SdfSample polygon_sample(const env::ConvexPolygon& obstacle, const Vec2& p) {
  const auto& v = obstacle.vertices();
  double best = std::numeric_limits<double>::infinity();
  Vec2 q = v.front();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& a = v[i];
    const Vec2 ab = v[(i + 1) % v.size()] - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    const Vec2 c = a + t * ab;
    const double d = (p - c).squaredNorm();
    if (d < best) {
      best = d;
      q = c;
    }
  }
  const double d = std::sqrt(best);
  const bool inside = obstacle.contains(p);
  Vec2 n = d > 0.0 ? Vec2((p - q) / d) : Vec2::UnitX();
  if (inside) n = -n;
  return {inside ? -d : d, n};
}

std::vector<HalfPlane> obstacle_half_planes(const RobotState& robot, const env::Workspace& ws, const MpcConfig& cfg) {
  std::vector<HalfPlane> out;
  for (const auto& o : ws.obstacles()) {
    const env::SdfSample s = polygon_sample(o, robot.position);
    if (s.distance < cfg.neighbor_dist) out.push_back(obstacle_half_plane(robot, s, cfg));
  }
  return out;
}

std::vector<HalfPlane> boundary_half_planes(const RobotState& robot, const env::EsdfGrid& grid,
                                            const MpcConfig& cfg) {
  const Vec2 lo = grid.origin();
  const Vec2 hi = grid.origin() + grid.extent();
  const Vec2& p = robot.position;
  const double keep = robot.radius + cfg.safety_margin;
  const double tau = cfg.obstacle_horizon;
  return {plane_from_normal(Vec2(1.0, 0.0), -(p.x() - lo.x() - keep) / tau),
          plane_from_normal(Vec2(-1.0, 0.0), -(hi.x() - p.x() - keep) / tau),
          plane_from_normal(Vec2(0.0, 1.0), -(p.y() - lo.y() - keep) / tau),
          plane_from_normal(Vec2(0.0, -1.0), -(hi.y() - p.y() - keep) / tau)};
}

VelocityProgram solve_velocity(const Vec2& preferred, const Vec2& current, std::span<const HalfPlane> planes,
                               std::size_t hard_count, const MpcConfig& cfg) {
  const double dv = cfg.a_max * cfg.dt;
  // A current velocity above v_max would leave the disc intersection empty.
  const Vec2 base = current.norm() > cfg.v_max ? Vec2(current * (cfg.v_max / current.norm())) : current;
  const Discs discs{cfg.v_max, base, dv};
  VelocityProgram out;
  Vec2 v;
  const std::size_t failed = program_2d(planes, discs, preferred, false, v);
  if (failed < planes.size()) {
    if (failed < hard_count) {
      out.velocity = brake(base, dv);
      out.status = StepStatus::hard_stop;
      return out;
    }
    program_relaxed(planes, hard_count, failed, discs, v);
    out.status = StepStatus::relaxed;
  }
  // Remove rounding drift past the kinematic limits.
  const double s = v.norm();
  if (s > cfg.v_max) v *= cfg.v_max / s;
  const double ds = (v - base).norm();
  if (ds > dv) v = base + (v - base) * (dv / ds);
  out.velocity = v;
  return out;
}

TrackingQp::TrackingQp(const MpcConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const int n = cfg.horizon;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l <= k; ++l) L(k, l) = 1.0;
    D(k, k) = 1.0;
    if (k > 0) D(k, k - 1) = -1.0;
  }
  const Eigen::MatrixXd A =
      cfg.w_track * cfg.dt * cfg.dt * L.transpose() * L + cfg.w_effort * D.transpose() * D;
  llt_.compute(A);
  if (llt_.info() != Eigen::Success) throw NumericError("tracking program matrix is not positive definite");
}

std::vector<Vec2> TrackingQp::solve(const Vec2& position, const Vec2& velocity, std::span<const Vec2> reference) const {
  if (reference.empty()) throw DomainError("mpc reference must contain at least one waypoint");
  const int n = cfg_.horizon;
  Eigen::MatrixXd rhs(n, 2);
  // Suffix sums implement L^T (ref - p0).
  Vec2 acc = Vec2::Zero();
  for (int k = n - 1; k >= 0; --k) {
    const Vec2& r = reference[std::min<std::size_t>(static_cast<std::size_t>(k), reference.size() - 1)];
    acc += r - position;
    rhs.row(k) = (cfg_.w_track * cfg_.dt) * acc.transpose();
  }
  rhs.row(0) += cfg_.w_effort * velocity.transpose();
  const Eigen::MatrixXd x = llt_.solve(rhs);
  std::vector<Vec2> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = x.row(k).transpose();
  return out;
}

MpcResult mpc_step(const RobotState& robot, std::span<const Vec2> reference, std::span<const RobotState> neighbors,
                   const env::EsdfGrid& grid, const MpcConfig& cfg) {
  return mpc_step(robot, reference, neighbors, grid, cfg, TrackingQp(cfg));
}

MpcResult mpc_step(const RobotState& robot, std::span<const Vec2> reference, std::span<const RobotState> neighbors,
                   const env::EsdfGrid& grid, const MpcConfig& cfg, const TrackingQp& qp, const env::Workspace* ws) {
  const Vec2 preferred = qp.solve(robot.position, robot.velocity, reference).front();

  std::vector<HalfPlane> planes;
  if (ws != nullptr) {
    planes = obstacle_half_planes(robot, *ws, cfg);
  } else if (grid.contains(robot.position)) {
    planes.push_back(obstacle_half_plane(robot, grid.query(robot.position), cfg));
  }
  for (const HalfPlane& b : boundary_half_planes(robot, grid, cfg)) planes.push_back(b);
  const std::size_t hard = planes.size();

  std::vector<std::pair<double, const RobotState*>> near;
  for (const RobotState& o : neighbors) {
    const double d2 = (o.position - robot.position).squaredNorm();
    if (d2 <= cfg.neighbor_dist * cfg.neighbor_dist) near.emplace_back(d2, &o);
  }
  std::sort(near.begin(), near.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second->id < b.second->id;
  });
  if (near.size() > static_cast<std::size_t>(cfg.max_neighbors)) near.resize(static_cast<std::size_t>(cfg.max_neighbors));
  for (const auto& [d2, o] : near) planes.push_back(orca_half_plane(robot, *o, cfg));

  VelocityProgram vp = solve_velocity(preferred, robot.velocity, planes, hard, cfg);
  auto blocked_by_neighbors = [&] {
    if (near.empty() || cfg.deadlock_turn <= 0.0 || vp.status == StepStatus::hard_stop) return false;
    // Speed the hard constraints alone allow, ignoring the acceleration limit.
    MpcConfig free = cfg;
    free.a_max = 2.0 * cfg.v_max / cfg.dt;
    const double alone = solve_velocity(preferred, robot.velocity, std::span(planes).first(hard), hard, free).velocity.norm();
    return vp.velocity.norm() < 0.5 * alone;
  };
  if (blocked_by_neighbors()) {
    const double c = std::cos(cfg.deadlock_turn);
    const double s = std::sin(cfg.deadlock_turn);
    const Vec2 turned(c * preferred.x() + s * preferred.y(), -s * preferred.x() + c * preferred.y());
    vp = solve_velocity(turned, robot.velocity, planes, hard, cfg);
  }
  return {vp.velocity, vp.status};
}

}  // namespace swarmdiff::micro
