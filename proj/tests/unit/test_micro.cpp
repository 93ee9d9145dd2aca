#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "swarmdiff/common/error.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/env/scenario.hpp"
#include "swarmdiff/micro/assignment.hpp"
#include "swarmdiff/micro/control.hpp"
#include "swarmdiff/micro/simulate.hpp"

using namespace swarmdiff;
using namespace swarmdiff::micro;

namespace {

std::vector<Vec2> random_points(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec2> p;
  for (int i = 0; i < n; ++i) {
    const double x = u(rng);
    const double y = u(rng);
    p.emplace_back(x, y);
  }
  return p;
}

gauss::Gmm single(const gauss::GaussianState& s) { return gauss::Gmm({s}, {1.0}); }

Eigen::MatrixXd one() { return Eigen::MatrixXd::Ones(1, 1); }

macro::GmmTrajectory straight_plan(Vec2 from, Vec2 to, int h, double sigma) {
  macro::GmmTrajectory g;
  costs::GaussianTrajectory t;
  for (int i = 0; i < h; ++i) {
    const Vec2 m = from + (to - from) * (static_cast<double>(i) / (h - 1));
    t.states.push_back({m.x(), m.y(), sigma, sigma, 0.0});
  }
  g.trajectories = {t};
  g.alphas = {1.0};
  g.pairs = {{0, 0}};
  g.plan = one();
  g.costs = one();
  g.start_gmm = single(t.states.front());
  g.goal_gmm = single(t.states.back());
  return g;
}

// Two half-weight lanes from a shared start component to two goals.
macro::GmmTrajectory split_plan(int h) {
  macro::GmmTrajectory g;
  const gauss::GaussianState start{8, 20, 1.5, 1.5, 0};
  for (double gy : {6.0, 34.0}) {
    costs::GaussianTrajectory t;
    for (int i = 0; i < h; ++i) {
      const double s = static_cast<double>(i) / (h - 1);
      t.states.push_back({8 + 24 * s, 20 + (gy - 20) * s, 1.5 - 0.5 * s, 1.5 - 0.5 * s, 0});
    }
    g.trajectories.push_back(t);
  }
  g.alphas = {0.5, 0.5};
  g.pairs = {{0, 0}, {0, 1}};
  g.plan = Eigen::MatrixXd(1, 2);
  g.plan << 0.5, 0.5;
  g.costs = Eigen::MatrixXd::Ones(1, 2);
  g.start_gmm = single(start);
  g.goal_gmm = gauss::Gmm({g.trajectories[0].states.back(), g.trajectories[1].states.back()}, {0.5, 0.5});
  return g;
}

std::vector<RobotState> robots_in_disc(Vec2 center, double spread, int n, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<Vec2> pts;
  while (static_cast<int>(pts.size()) < n) {
    const Vec2 p = center + spread * Vec2(z(rng), z(rng));
    bool ok = true;
    for (const Vec2& q : pts) ok = ok && (p - q).norm() > 2 * radius + 0.3;
    if (ok) pts.push_back(p);
  }
  return robots_from_positions(pts, radius);
}

// Independent reducer over the raw JSON lines.
struct RawMetrics {
  double d_bar = 0, d_obs = INFINITY, d_rob = INFINITY;
  bool success = false;
};

RawMetrics raw_reduce(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  RawMetrics m;
  std::vector<std::vector<double>> prev;
  std::vector<double> len;
  bool header = true;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (header) {
      header = false;
      len.assign(j["robots"].get<std::size_t>(), 0.0);
      continue;
    }
    if (j.contains("summary")) {
      m.success = j["summary"]["success"].get<bool>();
      continue;
    }
    if (!j["d_obs"].is_null()) m.d_obs = std::min(m.d_obs, j["d_obs"].get<double>());
    if (!j["d_rob"].is_null()) m.d_rob = std::min(m.d_rob, j["d_rob"].get<double>());
    const auto pos = j["positions"].get<std::vector<std::vector<double>>>();
    if (!prev.empty()) {
      for (std::size_t k = 0; k < pos.size(); ++k) len[k] += std::hypot(pos[k][0] - prev[k][0], pos[k][1] - prev[k][1]);
    }
    prev = pos;
  }
  double s = 0;
  for (double l : len) s += l;
  m.d_bar = s / static_cast<double>(len.size());
  return m;
}

}  // namespace

TEST_CASE("assignment identity and errors") {
  std::mt19937_64 rng(4);
  const auto p = random_points(rng, 12, 0, 10);
  const Assignment a = assign_targets(p, p);
  for (int k = 0; k < 12; ++k) CHECK(a.mapping[static_cast<std::size_t>(k)] == k);
  CHECK(a.objective == 0.0);
  CHECK_THROWS_AS(assign_targets(p, std::vector<Vec2>(3)), DomainError);
  CHECK(assign_targets(std::vector<Vec2>{}, std::vector<Vec2>{}).mapping.empty());
}

TEST_CASE("assignment matches permutation brute force") {
  std::mt19937_64 rng(11);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 1 + inst % 8;
    auto from = random_points(rng, n, 0, 10);
    auto to = random_points(rng, n, 0, 10);
    if (inst % 10 == 0 && n > 2) to[1] = to[0];  // duplicated targets
    const Assignment a = assign_targets(from, to);
    REQUIRE(is_permutation(a.mapping));
    const double best = oracle::assignment_brute_force(from, to);
    CHECK(a.objective == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("density targets") {
  const gauss::GaussianState s{5, 5, 1.0, 2.0, 0.3};
  std::mt19937_64 rng(2);
  const auto robots = robots_from_positions(random_points(rng, 30, 2, 8), 0.2);

  const auto same = density_targets(robots, single(s), single(s), one(), 1);
  for (std::size_t k = 0; k < robots.size(); ++k) CHECK((same.targets[k] - robots[k].position).norm() < 1e-12);

  gauss::GaussianState moved = s;
  moved.x += 3.0;
  moved.y -= 1.5;
  const auto shift = density_targets(robots, single(s), single(moved), one(), 1);
  for (std::size_t k = 0; k < robots.size(); ++k) {
    CHECK((shift.targets[k] - robots[k].position - Vec2(3.0, -1.5)).norm() < 1e-12);
  }

  // 1000 robots split evenly between two destinations.
  const gauss::Gmm split({{20, 10, 1, 1, 0}, {20, 30, 1, 1, 0}}, {0.5, 0.5});
  Eigen::MatrixXd half(1, 2);
  half << 0.5, 0.5;
  const gauss::GaussianState src{5, 20, 1, 1, 0};
  const auto many = robots_from_positions(gauss::sample_gmm(single(src), 1000, 3), 0.2);
  const auto d = density_targets(many, single(src), split, half, 77);
  int first = 0;
  for (int j : d.destination) first += j == 0;
  CHECK(std::abs(first - 500) <= 50);
  const auto again = density_targets(many, single(src), split, half, 77);
  CHECK(again.destination == d.destination);
  const auto quota = density_targets(many, single(src), split, half, 77, DestinationMode::quota);
  int qfirst = 0;
  for (int j : quota.destination) qfirst += j == 0;
  CHECK(qfirst == 500);

  // Association follows responsibility; far robots fall back and are counted.
  const gauss::Gmm two({{0, 0, 1, 1, 0}, {10, 0, 1, 1, 0}}, {0.5, 0.5});
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = diag(1, 1) = 0.5;
  auto probe = robots_from_positions(std::vector<Vec2>{{1, 0}, {9, 0}, {10, 40}}, 0.2);
  const auto far = density_targets(probe, two, two, diag, 5);
  CHECK(far.source == std::vector<int>{0, 1, 1});
  CHECK(far.far_robots == 1);

  Eigen::MatrixXd bad(1, 2);
  bad << 0.7, 0.3;
  CHECK_THROWS_AS(density_targets(many, single(src), split, bad, 1), DomainError);
  CHECK_THROWS_AS(density_targets(std::vector<RobotState>{}, single(src), split, half, 1), DomainError);
}

TEST_CASE("mpc tracks an unconstrained straight reference") {
  const env::Workspace ws(40, 40);
  const auto grid = env::build_esdf(ws, 0.5);
  MpcConfig cfg;
  const Vec2 dir = Vec2(3, 4).normalized();
  for (double speed : {0.5, 1.3, cfg.v_max, 3.5}) {
    RobotState r;
    r.position = {20, 20};
    // Steady state: the robot already moves as fast as it can along the line.
    r.velocity = std::min(speed, cfg.v_max) * dir;
    std::vector<Vec2> ref;
    for (int j = 1; j <= cfg.horizon; ++j) ref.push_back(r.position + j * speed * cfg.dt * dir);
    const MpcResult out = mpc_step(r, ref, {}, grid, cfg);
    const double expect = std::min((ref[0] - r.position).norm() / cfg.dt, cfg.v_max);
    CHECK(out.status == StepStatus::tracked);
    CHECK(std::abs(out.velocity.norm() - expect) < 1e-6);
    CHECK((out.velocity.normalized() - dir).norm() < 1e-6);
  }
  CHECK_THROWS_AS(mpc_step(RobotState{}, std::vector<Vec2>{}, {}, grid, cfg), DomainError);
}

TEST_CASE("mpc head-on robots are mirror symmetric") {
  const env::Workspace ws(20, 20);
  const auto grid = env::build_esdf(ws, 0.5);
  const MpcConfig cfg;
  for (const Vec2& offset : {Vec2(3, 0), Vec2(2, 1.5), Vec2(0.25, 0.5)}) {
    const Vec2 c(10, 10);
    RobotState a{0, c - offset, Vec2(0.75, 0.25), 0.2};
    RobotState b{1, c + offset, Vec2(-0.75, -0.25), 0.2};
    std::vector<Vec2> ra, rb;
    for (int j = 1; j <= cfg.horizon; ++j) {
      const Vec2 step = 0.125 * j * (c - a.position);
      ra.push_back(a.position + step);
      rb.push_back(b.position - step);
    }
    const Vec2 va = mpc_step(a, ra, std::vector<RobotState>{b}, grid, cfg).velocity;
    const Vec2 vb = mpc_step(b, rb, std::vector<RobotState>{a}, grid, cfg).velocity;
    CHECK((va + vb).norm() < 1e-9);
  }
}

TEST_CASE("mpc respects kinematic limits on random inputs") {
  const env::Workspace ws(30, 30, {env::ConvexPolygon({{12, 12}, {18, 12}, {18, 18}, {12, 18}})});
  const auto grid = env::build_esdf(ws, 0.25);
  const MpcConfig cfg;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  int checked = 0;
  for (int inst = 0; inst < 500; ++inst) {
    RobotState r;
    r.id = 0;
    r.position = Vec2(15, 15) + Vec2(14 * u(rng), 14 * u(rng));
    if (!grid.contains(r.position)) continue;
    r.velocity = Vec2(u(rng), u(rng)) * cfg.v_max / std::sqrt(2.0);
    std::vector<Vec2> ref;
    const Vec2 target = r.position + Vec2(10 * u(rng), 10 * u(rng));
    for (int j = 1; j <= cfg.horizon; ++j) ref.push_back(r.position + (target - r.position) * j / cfg.horizon);
    std::vector<RobotState> others;
    for (int o = 1; o <= static_cast<int>(inst % 6); ++o) {
      others.push_back({o, r.position + Vec2(3 * u(rng), 3 * u(rng)), Vec2(u(rng), u(rng)), 0.2});
    }
    const MpcResult out = mpc_step(r, ref, others, grid, cfg);
    CHECK(out.velocity.norm() <= cfg.v_max + 1e-9);
    CHECK((out.velocity - r.velocity).norm() <= cfg.a_max * cfg.dt + 1e-9);
    ++checked;
  }
  CHECK(checked > 400);
}

TEST_CASE("mpc hard stop when the obstacle constraint cannot be met") {
  const env::Workspace ws(20, 20, {env::ConvexPolygon({{10, 0}, {20, 0}, {20, 20}, {10, 20}})});
  const auto grid = env::build_esdf(ws, 0.25);
  MpcConfig cfg;
  RobotState r{0, Vec2(9.75, 10), Vec2(cfg.v_max, 0), 0.2};
  // Already inside the margin and moving in at full speed: no admissible velocity.
  cfg.obstacle_horizon = cfg.dt;
  const MpcResult out = mpc_step(r, std::vector<Vec2>{Vec2(12, 10)}, {}, grid, cfg);
  CHECK(out.status == StepStatus::hard_stop);
  CHECK(out.velocity.x() == doctest::Approx(cfg.v_max - cfg.a_max * cfg.dt));
}

TEST_CASE("antipodal circle exchange keeps the safety margin") {
  const env::Workspace ws(30, 30);
  const auto grid = env::build_esdf(ws, 0.5);
  const MpcConfig cfg;
  const TrackingQp qp(cfg);
  const int n = 10;
  const Vec2 c(15, 15);
  std::vector<RobotState> robots;
  std::vector<Vec2> goals;
  for (int k = 0; k < n; ++k) {
    const double a = 2 * std::numbers::pi * k / n;
    const Vec2 p = c + 8 * Vec2(std::cos(a), std::sin(a));
    robots.push_back({k, p, Vec2::Zero(), 0.2});
    goals.push_back(2 * c - p);
  }
  double min_gap = INFINITY;
  double max_speed = 0, max_accel = 0;
  for (int step = 0; step < 2000; ++step) {
    const auto snap = robots;
    for (int k = 0; k < n; ++k) {
      std::vector<RobotState> others;
      for (int o = 0; o < n; ++o) {
        if (o != k) others.push_back(snap[static_cast<std::size_t>(o)]);
      }
      const Vec2 p = snap[static_cast<std::size_t>(k)].position;
      const Vec2 g = goals[static_cast<std::size_t>(k)];
      std::vector<Vec2> ref;
      for (int j = 1; j <= cfg.horizon; ++j) {
        const double reach = j * cfg.dt * 0.8 * cfg.v_max;
        ref.push_back((g - p).norm() <= reach ? g : Vec2(p + (g - p).normalized() * reach));
      }
      const Vec2 v = mpc_step(snap[static_cast<std::size_t>(k)], ref, others, grid, cfg, qp).velocity;
      max_speed = std::max(max_speed, v.norm());
      max_accel = std::max(max_accel, (v - snap[static_cast<std::size_t>(k)].velocity).norm());
      robots[static_cast<std::size_t>(k)].velocity = v;
      robots[static_cast<std::size_t>(k)].position += v * cfg.dt;
    }
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        min_gap = std::min(min_gap, (robots[static_cast<std::size_t>(a)].position -
                                     robots[static_cast<std::size_t>(b)].position).norm() - 0.4);
      }
    }
  }
  CHECK(min_gap >= cfg.safety_margin);
  CHECK(max_speed <= cfg.v_max + 1e-9);
  CHECK(max_accel <= cfg.a_max * cfg.dt + 1e-9);
  double worst = 0;
  for (int k = 0; k < n; ++k) worst = std::max(worst, (robots[static_cast<std::size_t>(k)].position - goals[static_cast<std::size_t>(k)]).norm());
  CHECK(worst < 0.5);
}

TEST_CASE("simulate single robot along a straight plan") {
  const env::Workspace ws(50, 20);
  const auto grid = env::build_esdf(ws, 0.5);
  const auto plan = straight_plan({10, 10}, {40, 10}, 16, 1.0);
  const auto robots = robots_from_positions(std::vector<Vec2>{{10, 10}}, 0.2);
  SimConfig cfg;
  const SwarmLog log = simulate(robots, plan, grid, ws, cfg, 1);
  CHECK(log.success);
  const LogMetrics m = reduce_log(log);
  CHECK(m.D_bar <= 30.0 * 1.05);
  CHECK(m.D_bar >= 30.0 - cfg.capture_radius);
  CHECK(std::isinf(m.d_rob));
  CHECK(m.d_obs > 0.0);
}

TEST_CASE("simulate a split swarm") {
  const env::Workspace ws(40, 40, {env::ConvexPolygon({{18, 18}, {22, 18}, {22, 22}, {18, 22}})});
  const auto grid = env::build_esdf(ws, 0.25);
  const auto plan = split_plan(16);
  const auto robots = robots_in_disc({8, 20}, 1.5, 20, 0.2, 5);
  const SimConfig cfg;
  SimStats stats;
  const SwarmLog log = simulate(robots, plan, grid, ws, cfg, 42, &stats, Exec::serial);
  CHECK(log.success);
  CHECK(stats.segments == 15);
  const LogMetrics m = reduce_log(log);
  CHECK(m.d_rob >= 0.0);
  CHECK(m.d_obs >= 0.0);
  for (std::size_t f = 1; f < log.frames.size(); ++f) {
    for (std::size_t k = 0; k < robots.size(); ++k) {
      const Vec2 v = log.frames[f].velocities[k];
      CHECK(v.norm() <= cfg.mpc.v_max + 1e-9);
      CHECK((v - log.frames[f - 1].velocities[k]).norm() <= cfg.mpc.a_max * cfg.mpc.dt + 1e-9);
    }
  }
  // Both lanes receive robots.
  int upper = 0;
  for (const Vec2& p : log.frames.back().positions) upper += p.y() > 20;
  CHECK(upper > 3);
  CHECK(upper < 17);

  const std::string bytes = encode_log(log);
  CHECK(encode_log(simulate(robots, plan, grid, ws, cfg, 42, nullptr, Exec::serial)) == bytes);
  CHECK(encode_log(simulate(robots, plan, grid, ws, cfg, 42, nullptr, Exec::parallel)) == bytes);
  CHECK(decode_log(bytes) == log);

  const RawMetrics raw = raw_reduce(bytes);
  CHECK(raw.d_bar == m.D_bar);
  CHECK(raw.d_obs == m.d_obs);
  CHECK(raw.d_rob == m.d_rob);
  CHECK(raw.success == m.success);
}

TEST_CASE("simulate flags an exhausted step budget") {
  const env::Workspace ws(50, 20);
  const auto grid = env::build_esdf(ws, 0.5);
  const auto plan = straight_plan({10, 10}, {40, 10}, 16, 1.0);
  SimConfig cfg;
  cfg.max_steps = 5;
  const SwarmLog log = simulate(robots_from_positions(std::vector<Vec2>{{10, 10}}, 0.2), plan, grid, ws, cfg, 1);
  CHECK_FALSE(log.success);
  CHECK(log.frames.size() == 6);
  CHECK_FALSE(decode_log(encode_log(log)).success);
}

TEST_CASE("log decoding errors") {
  CHECK_THROWS_AS(decode_log(""), IoError);
  CHECK_THROWS_AS(decode_log("{\"format\":\"other\"}\n"), IoError);
  const env::Workspace ws(50, 20);
  const auto grid = env::build_esdf(ws, 0.5);
  const SwarmLog log = simulate(robots_from_positions(std::vector<Vec2>{{10, 10}}, 0.2),
                                straight_plan({10, 10}, {20, 10}, 4, 1.0), grid, ws, SimConfig{}, 1);
  std::string text = encode_log(log);
  text.resize(text.size() / 2);
  text.resize(text.rfind('\n') + 1);
  CHECK_THROWS_WITH_AS(decode_log(text), doctest::Contains("summary"), IoError);
}

TEST_CASE("sim config json round trip and validation") {
  SimConfig c;
  c.mpc.horizon = 7;
  c.destinations = DestinationMode::quota;
  c.capture_radius = 0.75;
  const nlohmann::json j = c;
  CHECK(j.get<SimConfig>() == c);
  c.mpc.v_max = -1;
  CHECK_THROWS_AS(c.validate(), DomainError);
  CHECK_THROWS_AS(destination_mode_from_string("greedy"), DomainError);
}

TEST_CASE("exact obstacle samples match the polygon SDF") {
  env::ScenarioParams sp;
  sp.width = 40;
  sp.height = 30;
  sp.obstacle_count = 6;
  sp.min_radius = 2;
  sp.max_radius = 5;
  sp.min_clearance = 1;
  sp.keepout_fraction = 0.0;
  const auto ws = env::generate_scenario(env::ScenarioKind::dense_obstacles, 41, sp);
  MpcConfig cfg;
  cfg.neighbor_dist = 6.0;
  std::mt19937_64 rng(41);
  const auto probes = random_points(rng, 500, 0.0, 30.0);
  const double h = 1e-6;
  for (const auto& p : probes) {
    std::size_t near = 0;
    for (const auto& o : ws.obstacles()) {
      const auto s = polygon_sample(o, p);
      const double d = oracle::polygon_sdf(o.vertices(), p);
      CHECK(std::abs(s.distance - d) < 1e-9);
      CHECK(std::abs(s.normal.norm() - 1.0) < 1e-9);
      // Directional derivative along the normal is 1 away from vertices.
      const double slope = (oracle::polygon_sdf(o.vertices(), p + h * s.normal) -
                            oracle::polygon_sdf(o.vertices(), p - h * s.normal)) / (2 * h);
      CHECK(std::abs(slope - 1.0) < 1e-4);
      if (d < cfg.neighbor_dist) ++near;
    }
    RobotState r;
    r.position = p;
    CHECK(obstacle_half_planes(r, ws, cfg).size() == near);
  }
}
