#include "swarmdiff/micro/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "swarmdiff/common/binary_io.hpp"
#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/parallel.hpp"
#include "swarmdiff/common/rng.hpp"
#include "swarmdiff/micro/assignment.hpp"

namespace swarmdiff::micro {

using nlohmann::json;

std::string to_string(DestinationMode m) { return m == DestinationMode::quota ? "quota" : "stochastic"; }

DestinationMode destination_mode_from_string(const std::string& s) {
  if (s == "stochastic") return DestinationMode::stochastic;
  if (s == "quota") return DestinationMode::quota;
  throw DomainError("unknown destination mode '" + s + "' (expected stochastic or quota)");
}

namespace {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int associate(const gauss::Gmm& gmm, const Vec2& p, bool& far) {
  double best_m = std::numeric_limits<double>::infinity();
  int nearest = 0;
  for (std::size_t i = 0; i < gmm.size(); ++i) {
    if (gmm.weight(i) <= 0.0) continue;
    const double m = gmm.mahalanobis2(i, p);
    if (m < best_m) {
      best_m = m;
      nearest = static_cast<int>(i);
    }
  }
  const std::vector<double> r = gmm.responsibilities(p);
  const bool empty = std::none_of(r.begin(), r.end(), [](double x) { return x > 0.0; });
  far = empty || best_m > kFarMahalanobis2;
  if (far) return nearest;
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

/// Largest-remainder split of `count` items over the weights; ties go to the
/// lower index.
std::vector<int> apportion(int count, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::vector<int> out(weights.size(), 0);
  if (count == 0 || !(total > 0.0)) return out;
  std::vector<std::pair<double, int>> rem;
  int used = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double q = count * weights[j] / total;
    out[j] = static_cast<int>(std::floor(q));
    used += out[j];
    rem.emplace_back(q - out[j], static_cast<int>(j));
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; used < count; ++k, ++used) ++out[static_cast<std::size_t>(rem[static_cast<std::size_t>(k)].second)];
  return out;
}

}  // namespace

DensityTargets density_targets(std::span<const RobotState> robots, const gauss::Gmm& gmm_now,
                               const gauss::Gmm& gmm_next, const Eigen::MatrixXd& plan, std::uint64_t seed,
                               DestinationMode mode) {
  if (robots.empty()) throw DomainError("density targets need at least one robot");
  const auto n1 = static_cast<Eigen::Index>(gmm_now.size());
  const auto n2 = static_cast<Eigen::Index>(gmm_next.size());
  if (plan.rows() != n1 || plan.cols() != n2) throw DomainError("density plan shape does not match the mixtures");
  for (Eigen::Index i = 0; i < n1; ++i) {
    if (std::abs(plan.row(i).sum() - gmm_now.weight(static_cast<std::size_t>(i))) > 1e-6) {
      throw DomainError("density plan row sums do not match the current weights");
    }
  }
  for (Eigen::Index j = 0; j < n2; ++j) {
    if (std::abs(plan.col(j).sum() - gmm_next.weight(static_cast<std::size_t>(j))) > 1e-6) {
      throw DomainError("density plan column sums do not match the next weights");
    }
  }

  const std::size_t n = robots.size();
  DensityTargets out;
  out.targets.resize(n);
  out.source.resize(n);
  out.destination.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    bool far = false;
    out.source[k] = associate(gmm_now, robots[k].position, far);
    if (far) ++out.far_robots;
  }

  auto row_weights = [&](int i) {
    std::vector<double> w(static_cast<std::size_t>(n2));
    for (Eigen::Index j = 0; j < n2; ++j) w[static_cast<std::size_t>(j)] = std::max(0.0, plan(i, j));
    double s = 0.0;
    for (double x : w) s += x;
    // A zero-weight source row falls back to the next mixture's weights.
    if (!(s > 0.0)) w = gmm_next.weights();
    return w;
  };

  if (mode == DestinationMode::stochastic) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::vector<double> w = row_weights(out.source[k]);
      double total = 0.0;
      for (double x : w) total += x;
      Rng rng = make_rng(seed, streams::kDensity, k);
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      int pick = -1;
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (w[j] <= 0.0) continue;
        acc += w[j];
        pick = static_cast<int>(j);
        if (u < acc) break;
      }
      out.destination[k] = pick;
    }
  } else {
    for (Eigen::Index i = 0; i < n1; ++i) {
      std::vector<std::size_t> members;
      for (std::size_t k = 0; k < n; ++k) {
        if (out.source[k] == i) members.push_back(k);
      }
      const std::vector<int> quota = apportion(static_cast<int>(members.size()), row_weights(static_cast<int>(i)));
      std::size_t next = 0;
      for (std::size_t j = 0; j < quota.size(); ++j) {
        for (int q = 0; q < quota[j]; ++q) out.destination[members[next++]] = static_cast<int>(j);
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    const auto map = gauss::ot_map(gmm_now.component(static_cast<std::size_t>(out.source[k])),
                                   gmm_next.component(static_cast<std::size_t>(out.destination[k])));
    out.targets[k] = map.apply(robots[k].position);
  }
  return out;
}

void SimConfig::validate() const {
  mpc.validate();
  if (!(capture_radius > 0.0)) throw DomainError("sim capture_radius must be positive");
  if (!(segment_time >= 0.0)) throw DomainError("sim segment_time must be nonnegative");
  if (!(cruise_fraction > 0.0 && cruise_fraction <= 1.0)) throw DomainError("sim cruise_fraction must lie in (0, 1]");
  if (max_steps < 0) throw DomainError("sim max_steps must be nonnegative");
  if (settle_steps < 0) throw DomainError("sim settle_steps must be nonnegative");
  if (!(process_noise >= 0.0)) throw DomainError("sim process_noise must be nonnegative");
}

void to_json(json& j, const SimConfig& c) {
  j = {{"mpc", c.mpc},
       {"capture_radius", c.capture_radius},
       {"segment_time", c.segment_time},
       {"cruise_fraction", c.cruise_fraction},
       {"max_steps", c.max_steps},
       {"settle_steps", c.settle_steps},
       {"destinations", to_string(c.destinations)},
       {"process_noise", c.process_noise}};
}

void from_json(const json& j, SimConfig& c) {
  const SimConfig d;
  c.mpc = j.value("mpc", d.mpc);
  c.capture_radius = j.value("capture_radius", d.capture_radius);
  c.segment_time = j.value("segment_time", d.segment_time);
  c.cruise_fraction = j.value("cruise_fraction", d.cruise_fraction);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.settle_steps = j.value("settle_steps", d.settle_steps);
  c.destinations = destination_mode_from_string(j.value("destinations", to_string(d.destinations)));
  c.process_noise = j.value("process_noise", d.process_noise);
}

std::vector<RobotState> robots_from_positions(std::span<const Vec2> positions, double radius) {
  std::vector<RobotState> out(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) {
    out[k].id = static_cast<int>(k);
    out[k].position = positions[k];
    out[k].radius = radius;
  }
  return out;
}

namespace {

Frame make_frame(double t, const std::vector<RobotState>& robots, const env::Workspace& ws) {
  Frame f;
  f.t = t;
  f.d_rob = std::numeric_limits<double>::infinity();
  f.d_obs = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < robots.size(); ++a) {
    f.positions.push_back(robots[a].position);
    f.velocities.push_back(robots[a].velocity);
    f.d_obs = std::min(f.d_obs, ws.signed_distance(robots[a].position) - robots[a].radius);
    for (std::size_t b = a + 1; b < robots.size(); ++b) {
      const double d = (robots[a].position - robots[b].position).norm() - robots[a].radius - robots[b].radius;
      f.d_rob = std::min(f.d_rob, d);
    }
  }
  return f;
}

std::vector<gauss::GaussianState> slice(const macro::GmmTrajectory& plan, int t) {
  std::vector<gauss::GaussianState> out;
  for (const auto& traj : plan.trajectories) out.push_back(traj.states[static_cast<std::size_t>(t)]);
  return out;
}

}  // namespace

SwarmLog simulate(std::span<const RobotState> robots, const macro::GmmTrajectory& plan, const env::EsdfGrid& grid,
                  const env::Workspace& ws, const SimConfig& cfg, std::uint64_t seed, SimStats* stats, Exec exec) {
  cfg.validate();
  plan.validate();
  if (robots.empty()) throw DomainError("simulation needs at least one robot");
  const int horizon = plan.horizon();
  if (horizon < 2) throw DomainError("simulation needs a plan horizon of at least 2");
  const std::size_t n = robots.size();
  const MpcConfig& mpc = cfg.mpc;
  for (std::size_t k = 0; k < n; ++k) {
    if (!(robots[k].radius > 0.0)) throw DomainError("robot radius must be positive");
    if (robots[k].velocity.norm() > mpc.v_max) throw DomainError("robot initial speed exceeds v_max");
  }

  double seg_time = cfg.segment_time;
  if (seg_time == 0.0) {
    double longest = 0.0;
    for (const auto& traj : plan.trajectories) {
      for (std::size_t t = 0; t + 1 < traj.size(); ++t) longest = std::max(longest, (traj.states[t + 1].mean() - traj.states[t].mean()).norm());
    }
    seg_time = longest / (cfg.cruise_fraction * mpc.v_max);
  }
  const int seg_steps = std::max(1, static_cast<int>(std::ceil(seg_time / mpc.dt - 1e-9)));
  const int budget = cfg.max_steps > 0 ? cfg.max_steps : (horizon - 1) * seg_steps + cfg.settle_steps;

  SwarmLog log;
  log.dt = mpc.dt;
  log.seed = seed;
  log.config_hash = plan.config_hash;
  std::vector<RobotState> cur(robots.begin(), robots.end());
  for (std::size_t k = 0; k < n; ++k) {
    cur[k].id = static_cast<int>(k);
    log.radii.push_back(cur[k].radius);
  }
  const TrackingQp qp(mpc);
  int step = 0;
  log.frames.push_back(make_frame(0.0, cur, ws));

  // Advances every robot one step toward reference(k, j), j = 1..horizon.
  auto advance = [&](auto&& reference) {
    const std::vector<RobotState> snapshot = cur;
    std::vector<MpcResult> results(n);
    parallel_for(static_cast<std::ptrdiff_t>(n), exec, [&](std::ptrdiff_t kk) {
      const auto k = static_cast<std::size_t>(kk);
      std::vector<RobotState> neighbors;
      for (std::size_t o = 0; o < n; ++o) {
        if (o != k && (snapshot[o].position - snapshot[k].position).norm() <= mpc.neighbor_dist) {
          neighbors.push_back(snapshot[o]);
        }
      }
      std::vector<Vec2> ref(static_cast<std::size_t>(mpc.horizon));
      for (int j = 0; j < mpc.horizon; ++j) ref[static_cast<std::size_t>(j)] = reference(k, j + 1);
      results[k] = mpc_step(snapshot[k], ref, neighbors, grid, mpc, qp, &ws);
    });
    Rng noise = make_rng(seed, streams::kSimulate, static_cast<std::uint64_t>(step));
    std::normal_distribution<double> gauss01;
    for (std::size_t k = 0; k < n; ++k) {
      cur[k].velocity = results[k].velocity;
      cur[k].position += results[k].velocity * mpc.dt;
      if (cfg.process_noise > 0.0) {
        const double s = cfg.process_noise * std::sqrt(mpc.dt);
        const double nx = gauss01(noise);
        const double ny = gauss01(noise);
        cur[k].position += s * Vec2(nx, ny);
      }
      if (results[k].status == StepStatus::relaxed) ++log.relaxed_steps;
      if (results[k].status == StepStatus::hard_stop) ++log.hard_stops;
    }
    ++step;
    log.frames.push_back(make_frame(step * mpc.dt, cur, ws));
  };

  std::vector<Vec2> goal(n), origin(n);
  std::vector<int> labels(n, 0);
  double assign_seconds = 0.0;
  int segments = 0;
  for (int t = 0; t + 1 < horizon && step < budget; ++t) {
    const std::vector<gauss::GaussianState> now = slice(plan, t);
    const std::vector<gauss::GaussianState> next = slice(plan, t + 1);
    std::vector<Vec2> targets(n);
    std::vector<int> target_labels(n);
    if (t == 0) {
      // Split each start component over its trajectories per the transport plan.
      Eigen::MatrixXd plan0 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(plan.start_gmm.size()),
                                                    static_cast<Eigen::Index>(plan.size()));
      for (std::size_t k = 0; k < plan.size(); ++k) plan0(plan.pairs[k].first, static_cast<Eigen::Index>(k)) = plan.alphas[k];
      const gauss::Gmm next_gmm(next, plan.alphas);
      const DensityTargets dt0 = density_targets(cur, plan.start_gmm, next_gmm, plan0,
                                                 derive_seed(seed, streams::kDensity), cfg.destinations);
      log.far_robots += dt0.far_robots;
      targets = dt0.targets;
      target_labels = dt0.destination;
    } else {
      // Robots keep the trajectory they were routed onto. The map is applied
      // to the previous target so tracking lag does not accumulate.
      for (std::size_t k = 0; k < n; ++k) {
        const auto l = static_cast<std::size_t>(labels[k]);
        targets[k] = gauss::ot_map(now[l], next[l]).apply(goal[k]);
        target_labels[k] = labels[k];
      }
    }
    std::vector<Vec2> positions(n);
    for (std::size_t k = 0; k < n; ++k) positions[k] = cur[k].position;
    const auto t0 = std::chrono::steady_clock::now();
    const Assignment a = assign_targets(positions, targets);
    assign_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t k = 0; k < n; ++k) {
      goal[k] = targets[static_cast<std::size_t>(a.mapping[k])];
      labels[k] = target_labels[static_cast<std::size_t>(a.mapping[k])];
      origin[k] = cur[k].position;
    }
    const bool last = t + 2 == horizon;
    for (int s = 0; s < seg_steps && step < budget; ++s) {
      advance([&](std::size_t k, int j) {
        double frac = static_cast<double>(s + j) / seg_steps;
        if (last) frac = std::min(frac, 1.0);
        return Vec2(origin[k] + frac * (goal[k] - origin[k]));
      });
    }
    ++segments;
  }

  auto captured = [&] {
    for (std::size_t k = 0; k < n; ++k) {
      if ((cur[k].position - goal[k]).norm() > cfg.capture_radius) return false;
    }
    return true;
  };
  while (step < budget && !captured()) {
    advance([&](std::size_t k, int) { return goal[k]; });
  }
  log.success = segments == horizon - 1 && captured();
  log.final_targets = goal;
  if (stats) {
    stats->assignment_seconds = assign_seconds;
    stats->segments = segments;
    stats->segment_steps = seg_steps;
  }
  return log;
}

namespace {

json vec_list(const std::vector<Vec2>& v) {
  json a = json::array();
  for (const Vec2& p : v) a.push_back({p.x(), p.y()});
  return a;
}

std::vector<Vec2> parse_vec_list(const json& a) {
  std::vector<Vec2> out;
  for (const auto& p : a) out.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  return out;
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double null_as_inf(const json& x) {
  return x.is_null() ? std::numeric_limits<double>::infinity() : x.get<double>();
}

}  // namespace

std::string encode_log(const SwarmLog& log) {
  std::string out;
  json header = {{"format", "swarmdiff-log"}, {"version", 1},     {"robots", log.radii.size()},
                 {"radii", log.radii},        {"dt", log.dt},     {"seed", log.seed},
                 {"config_hash", log.config_hash}};
  out += header.dump() + "\n";
  for (const Frame& f : log.frames) {
    json line = {{"t", f.t},
                 {"positions", vec_list(f.positions)},
                 {"velocities", vec_list(f.velocities)},
                 {"d_rob", finite_or_null(f.d_rob)},
                 {"d_obs", finite_or_null(f.d_obs)}};
    out += line.dump() + "\n";
  }
  json summary = {{"summary",
                   {{"success", log.success},
                    {"frames", log.frames.size()},
                    {"relaxed_steps", log.relaxed_steps},
                    {"hard_stops", log.hard_stops},
                    {"far_robots", log.far_robots},
                    {"final_targets", vec_list(log.final_targets)}}}};
  out += summary.dump() + "\n";
  return out;
}

SwarmLog decode_log(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  SwarmLog log;
  int line_no = 0;
  bool have_summary = false;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (line_no == 1) {
        if (j.value("format", "") != "swarmdiff-log") throw IoError("not a swarmdiff log");
        if (j.value("version", 0) != 1) throw IoError("unsupported log version");
        log.radii = j.at("radii").get<std::vector<double>>();
        log.dt = j.at("dt").get<double>();
        log.seed = j.at("seed").get<std::uint64_t>();
        log.config_hash = j.value("config_hash", "");
        continue;
      }
      if (j.contains("summary")) {
        const json& s = j.at("summary");
        log.success = s.at("success").get<bool>();
        log.relaxed_steps = s.value("relaxed_steps", 0);
        log.hard_stops = s.value("hard_stops", 0);
        log.far_robots = s.value("far_robots", 0);
        log.final_targets = parse_vec_list(s.at("final_targets"));
        if (s.at("frames").get<std::size_t>() != log.frames.size()) throw IoError("log frame count mismatch");
        have_summary = true;
        continue;
      }
      Frame f;
      f.t = j.at("t").get<double>();
      f.positions = parse_vec_list(j.at("positions"));
      f.velocities = parse_vec_list(j.at("velocities"));
      f.d_rob = null_as_inf(j.at("d_rob"));
      f.d_obs = null_as_inf(j.at("d_obs"));
      if (f.positions.size() != log.radii.size() || f.velocities.size() != log.radii.size()) {
        throw IoError("frame robot count differs from the header");
      }
      log.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw IoError("log line " + std::to_string(line_no) + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError("log line " + std::to_string(line_no) + ": " + e.what());
  }
  if (line_no == 0) throw IoError("empty log");
  if (!have_summary) throw IoError("log has no summary line (truncated?)");
  return log;
}

void write_log(const std::string& path, const SwarmLog& log) { binio::write_text(path, encode_log(log)); }

SwarmLog read_log(const std::string& path) {
  const std::vector<char> bytes = binio::read_file(path);
  return decode_log(std::string(bytes.begin(), bytes.end()));
}

LogMetrics reduce_log(const SwarmLog& log) {
  LogMetrics m;
  m.success = log.success;
  m.steps = log.frames.empty() ? 0 : static_cast<int>(log.frames.size()) - 1;
  m.d_obs = std::numeric_limits<double>::infinity();
  m.d_rob = std::numeric_limits<double>::infinity();
  const std::size_t n = log.radii.size();
  std::vector<double> length(n, 0.0);
  for (std::size_t f = 0; f < log.frames.size(); ++f) {
    m.d_obs = std::min(m.d_obs, log.frames[f].d_obs);
    m.d_rob = std::min(m.d_rob, log.frames[f].d_rob);
    if (f == 0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      length[k] += (log.frames[f].positions[k] - log.frames[f - 1].positions[k]).norm();
    }
  }
  double total = 0.0;
  for (double l : length) total += l;
  m.D_bar = n > 0 ? total / static_cast<double>(n) : 0.0;
  return m;
}

}  // namespace swarmdiff::micro
