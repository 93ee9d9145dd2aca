// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "support/oracles.hpp"
#include "swarmdiff/common/binary_io.hpp"
#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/common/rng.hpp"
#include "swarmdiff/costs/costs.hpp"
#include "swarmdiff/diffusion/sampler.hpp"
#include "swarmdiff/diffusion/train.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/env/scenario.hpp"
#include "swarmdiff/gaussian/gaussian.hpp"
#include "swarmdiff/harness/cli.hpp"
#include "swarmdiff/harness/pipeline.hpp"
#include "swarmdiff/macro/transport.hpp"
#include "swarmdiff/micro/assignment.hpp"
#include "swarmdiff/prm/dataset.hpp"

using namespace swarmdiff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------- 1: W2

Mat2 eig_sqrt(const Mat2& m) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double w2_oracle(const gauss::GaussianState& a, const gauss::GaussianState& b) {
  const Mat2 s1 = a.covariance(), s2 = b.covariance();
  const Mat2 r = eig_sqrt(s1);
  const double bures = (s1 + s2 - 2.0 * eig_sqrt(r * s2 * r)).trace();
  return std::sqrt((a.mean() - b.mean()).squaredNorm() + std::max(0.0, bures));
}

Outcome w2_suite() {
  using gauss::GaussianState;
  const double tol = 1e-9;
  const GaussianState unit{0, 0, 1, 1, 0};
  double worst = 0.0;
  worst = std::max(worst, std::abs(gauss::wasserstein2(unit, unit)));
  worst = std::max(worst, std::abs(gauss::wasserstein2(unit, GaussianState{3, 4, 1, 1, 0}) - 5.0));
  worst = std::max(worst, std::abs(gauss::wasserstein2(GaussianState{0, 0, 2, 1, 0}, unit) - 1.0));
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> pos(-20, 20), sig(0.1, 5.0), cor(-0.95, 0.95);
  auto rnd = [&] { return GaussianState{pos(rng), pos(rng), sig(rng), sig(rng), cor(rng)}; };
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = rnd(), b = rnd(), c = rnd();
    const double ab = gauss::wasserstein2(a, b), ba = gauss::wasserstein2(b, a);
    const double ac = gauss::wasserstein2(a, c), bc = gauss::wasserstein2(b, c);
    if (ab < 0.0 || std::abs(ab - ba) > tol || ac > ab + bc + tol || gauss::wasserstein2(a, a) > tol) ++violations;
    worst = std::max(worst, std::abs(ab - w2_oracle(a, b)));
  }
  return {worst <= tol && violations == 0,
          "max closed-form error " + fmt("%.2e", worst) + ", axiom violations " + std::to_string(violations) + "/1000"};
}

// ---------------------------------------------------------------- 2: CVaR

env::EsdfGrid linear_grid(double offset) {
  const int n = 40;
  const double res = 0.5;
  std::vector<double> values;
  std::vector<Vec2> grads;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      values.push_back((j + 0.5) * res - offset);
      grads.emplace_back(0.0, 1.0);
    }
  }
  return env::EsdfGrid(res, Vec2::Zero(), n, n, Vec2(n * res, n * res), values, grads);
}

Outcome cvar_suite() {
  const auto grid = linear_grid(4.0);
  // s = 1 at y = 5 and n^T Sigma n = sigma_y^2 = 1.
  const gauss::GaussianState s{10.0, 5.0, 3.0, 1.0, 0.2};
  const double oracle_05 = -1.0 + oracle::normal_pdf(oracle::normal_quantile(0.5)) / 0.5;
  const double oracle_005 = -1.0 + oracle::normal_pdf(oracle::normal_quantile(0.95)) / 0.05;
  const double e1 = std::abs(costs::cvar_collision(s, grid, 0.5) - (-0.20212));
  const double e2 = std::abs(costs::cvar_collision(s, grid, 0.05) - 1.06271);
  const double e3 = std::max(std::abs(costs::cvar_collision(s, grid, 0.5) - oracle_05),
                             std::abs(costs::cvar_collision(s, grid, 0.05) - oracle_005));
  int breaks = 0;
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 50; ++i) {
    const double v = costs::cvar_collision(s, grid, i / 51.0);
    if (!(v < prev)) ++breaks;
    prev = v;
  }
  const double worst = std::max({e1, e2, e3});
  return {worst <= 1e-4 && breaks == 0,
          "max value error " + fmt("%.2e", worst) + ", monotonicity breaks " + std::to_string(breaks) + "/50"};
}

// ---------------------------------------------------------------- 3: gradient

Outcome gradient_suite() {
  env::ScenarioParams p;
  p.width = 40;
  p.height = 30;
  p.obstacle_count = 6;
  p.min_radius = 2;
  p.max_radius = 5;
  p.min_clearance = 1;
  p.keepout_fraction = 0.0;
  const auto grid = env::build_esdf(env::generate_scenario(env::ScenarioKind::dense_obstacles, 23, p), 0.25);
  const auto gp = costs::GpModel::constant_velocity(0.5, 1.0, 0.5);
  const double res = grid.resolution();
  const double h = 1e-5;
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> px(4, 36), py(4, 26), sig(0.3, 1.5), cor(-0.8, 0.8), step(-1, 1), lam(0.1, 2.0);
  int done = 0, attempts = 0, bad = 0, coords = 0;
  double worst = 0.0;
  while (done < 100 && attempts < 20000) {
    ++attempts;
    const costs::CostWeights w{lam(rng), lam(rng), lam(rng) / 10, 0.1, 0.2};
    costs::GaussianTrajectory t;
    t.dt = 0.5;
    gauss::GaussianState s{px(rng), py(rng), sig(rng), sig(rng), cor(rng)};
    for (int i = 0; i < 16; ++i) {
      t.states.push_back(s);
      s.x = std::clamp(s.x + step(rng), 1.0, 39.0);
      s.y = std::clamp(s.y + step(rng), 1.0, 29.0);
      s.sigma_x = std::clamp(s.sigma_x + 0.1 * step(rng), 0.2, 2.0);
      s.sigma_y = std::clamp(s.sigma_y + 0.1 * step(rng), 0.2, 2.0);
      s.rho = std::clamp(s.rho + 0.1 * step(rng), -0.85, 0.85);
    }
    const double k = oracle::normal_pdf(oracle::normal_quantile(1.0 - w.alpha)) / w.alpha;
    // Grid lines and the hinge kink are non-differentiable; skip trajectories
    // whose stencil touches them.
    bool smooth = true;
    std::vector<Vec2> normals;
    for (const auto& st : t.states) {
      for (double c : {st.x, st.y}) {
        const double f = c / res - 0.5;
        if (std::abs(f - std::round(f)) < 1e-3) smooth = false;
      }
      const auto q = grid.query(st.mean());
      normals.push_back(q.normal);
      if (std::abs(-q.distance + k * q.normal.dot(st.covariance() * q.normal) - w.epsilon) < 1e-3) smooth = false;
    }
    if (!smooth) continue;
    ++done;
    auto frozen_total = [&](const costs::GaussianTrajectory& tr) {
      double coll = 0.0;
      for (std::size_t j = 0; j < tr.size(); ++j) {
        const auto& st = tr.states[j];
        coll += std::max(0.0, -grid.query(st.mean()).distance + k * normals[j].dot(st.covariance() * normals[j]) -
                                  w.epsilon);
      }
      return w.lambda_obs * coll + w.lambda_dis * costs::transport_cost(tr) + w.lambda_gp * costs::gp_cost(tr, gp);
    };
    const auto g = costs::cost_gradient(t, grid, w, gp);
    for (std::size_t j = 0; j < t.size(); ++j) {
      for (int c = 0; c < 5; ++c) {
        auto tp = t, tm = t;
        Vec5 vp = t.states[j].to_vector(), vm = vp;
        vp[c] += h;
        vm[c] -= h;
        tp.states[j] = gauss::GaussianState::from_vector(vp);
        tm.states[j] = gauss::GaussianState::from_vector(vm);
        const double fd = -(frozen_total(tp) - frozen_total(tm)) / (2 * h);
        const double rel = std::abs(g[j][c] - fd) / std::max(std::abs(fd), 1e-3);
        worst = std::max(worst, rel);
        ++coords;
        if (rel >= 1e-3) ++bad;
      }
    }
  }
  return {done == 100 && bad == 0,
          std::to_string(done) + " trajectories, " + std::to_string(coords) + " coordinates, max relative error " +
              fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- 4: LP

double permutation_minimum(const Eigen::MatrixXd& c) {
  const int n = static_cast<int>(c.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += c(i, perm[i]);
    best = std::min(best, s / n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Outcome lp_suite() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> uc(0.0, 10.0), uw(0.05, 1.0);
  std::uniform_int_distribution<int> side(1, 8);
  int instances = 0, bad = 0, largest = 0;
  double worst_res = 0.0, worst_obj = 0.0;
  auto random_w = [&](int n) {
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = uw(rng);
    return Eigen::VectorXd(w / w.sum());
  };
  auto check = [&](const Eigen::MatrixXd& c, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double brute) {
    const auto s = macro::solve_transport(c, a, b);
    const double res = std::max((s.plan.rowwise().sum() - a).cwiseAbs().maxCoeff(),
                                (s.plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff());
    const double obj = std::abs(s.objective - brute) / std::max(1.0, std::abs(brute));
    worst_res = std::max(worst_res, res);
    worst_obj = std::max(worst_obj, obj);
    if (res > 1e-8 || obj > 1e-9 || (s.plan.array() < -1e-12).any()) ++bad;
    ++instances;
    largest = std::max(largest, static_cast<int>(c.size()));
  };
  // Random marginals: every vertex enumerated through spanning trees of the
  // row/column graph, which is exhaustive up to 16 cells.
  while (instances < 50) {
    const int m = side(rng), n = side(rng);
    if (m * n > 16) continue;
    Eigen::MatrixXd c(m, n);
    for (Eigen::Index k = 0; k < c.size(); ++k) c.data()[k] = uc(rng);
    const auto a = random_w(m), b = random_w(n);
    check(c, a, b, oracle::spanning_tree_vertex_minimum(c, a, b));
  }
  // Uniform square marginals up to 8x8: the vertices are exactly the scaled
  // permutation matrices, all n! of which are enumerated.
  for (int i = 0; i < 50; ++i) {
    const int n = 2 + i % 7;
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index k = 0; k < c.size(); ++k) c.data()[k] = uc(rng);
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / n);
    check(c, w, w, permutation_minimum(c));
  }
  // General marginals up to 8x8 are beyond exhaustive enumeration; they are
  // cross-checked against an independent dense simplex instead.
  int general_bad = 0;
  for (int i = 0; i < 20; ++i) {
    const int m = 2 + i % 7, n = 8 - i % 7;
    Eigen::MatrixXd c(m, n);
    for (Eigen::Index k = 0; k < c.size(); ++k) c.data()[k] = uc(rng);
    const auto a = random_w(m), b = random_w(n);
    const auto s = macro::solve_transport(c, a, b);
    const double lp = oracle::transport_lp_minimum(c, a, b);
    if (std::abs(s.objective - lp) > 1e-9 * std::max(1.0, std::abs(lp))) ++general_bad;
  }
  return {bad == 0 && general_bad == 0,
          std::to_string(instances) + " enumerated instances up to " + std::to_string(largest) +
                        " cells, max marginal residual " + fmt("%.1e", worst_res) + ", max objective gap " +
                        fmt("%.1e", worst_obj) + "; dense-LP cross-check " + std::to_string(20 - general_bad) + "/20"};
}

// ---------------------------------------------------------------- 5: assignment

Outcome assignment_suite() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(-10, 10);
  int bad = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = 1 + i % 8;
    std::vector<Vec2> from, to;
    for (int k = 0; k < n; ++k) {
      from.emplace_back(u(rng), u(rng));
      to.emplace_back(u(rng), u(rng));
    }
    const auto a = micro::assign_targets(from, to);
    const double brute = oracle::assignment_brute_force(from, to);
    double recomputed = 0.0;
    for (int k = 0; k < n; ++k) recomputed += (from[k] - to[a.mapping[k]]).squaredNorm();
    const double gap = std::abs(recomputed - brute);
    worst = std::max(worst, gap);
    if (!micro::is_permutation(a.mapping) || gap > 1e-9 * std::max(1.0, brute)) ++bad;
  }
  return {bad == 0, "100 instances N=1..8, max gap to brute force " + fmt("%.1e", worst)};
}

// ---------------------------------------------------------------- 6: ESDF

Outcome esdf_suite(const harness::PlannerConfig& cfg) {
  const double res = cfg.esdf_resolution;
  double worst = 0.0;
  int probes = 0;
  for (int s = 0; s < 10; ++s) {
    const auto ws = env::generate_scenario(cfg.kind, derive_seed(606, streams::kScenario, s), cfg.scenario);
    const auto grid = env::build_esdf(ws, res);
    std::vector<std::vector<oracle::P2>> polys;
    for (const auto& o : ws.obstacles()) polys.push_back(o.vertices());
    std::mt19937_64 rng(606 + s);
    std::uniform_real_distribution<double> ux(0.0, ws.width()), uy(0.0, ws.height());
    for (int i = 0; i < 1000; ++i, ++probes) {
      const Vec2 p(ux(rng), uy(rng));
      worst = std::max(worst, std::abs(grid.query(p).distance - oracle::scene_sdf(polys, p, ws.distance_cap())));
    }
  }
  return {worst <= res, std::to_string(probes) + " probes on 10 scenes, max abs error " + fmt("%.4f", worst) +
                            " m (resolution " + fmt("%.2f", res) + ")"};
}

// ---------------------------------------------------------------- shared model

struct Trained {
  harness::PlannerConfig cfg;
  prm::Dataset data;
  diffusion::DiffusionModel model;
  double final_loss = 0.0;
};

double eps_error(const diffusion::DiffusionModel& m, const diffusion::TrainingExample& ex, int t, int draws) {
  const auto net = m.network();
  double total = 0.0;
  for (int d = 0; d < draws; ++d) {
    const auto noisy = diffusion::forward_diffuse(ex.z, t, m.schedule, derive_seed(707, 1, d));
    diffusion::Denoiser<float>::Input in;
    in.x = noisy.noisy.cast<float>();
    in.t = t;
    in.context = ex.context.transpose().cast<float>();
    total += (net.forward(in).cast<double>() - noisy.eps).array().square().mean();
  }
  return total / draws;
}

// ---------------------------------------------------------------- 7: training

Outcome training_suite(const Trained& tr) {
  const auto& cfg = tr.cfg;
  // Memorization: one trajectory repeated.
  prm::Dataset one = tr.data;
  one.records.assign(1, tr.data.records.front());
  auto model = harness::init_model(cfg, one);
  const auto examples = prm::training_examples(one, model.normalizer);
  std::vector<diffusion::TrainingExample> repeated(100, examples.front());
  diffusion::TrainConfig tc = cfg.train;
  tc.steps = 2000;
  const auto mem = diffusion::train(model.denoiser, model.params, 0, repeated, model.schedule, tc);
  model.params = mem.params;
  const int t_half = model.schedule.steps() / 2;
  const double err = eps_error(model, examples.front(), t_half, 64);

  // 100 distinct trajectories.
  prm::Dataset hundred = tr.data;
  hundred.records.resize(100);
  auto m100 = harness::init_model(cfg, hundred);
  const auto ex100 = prm::training_examples(hundred, m100.normalizer);
  tc.steps = 1000;
  const auto run = diffusion::train(m100.denoiser, m100.params, 0, ex100, m100.schedule, tc);
  const double first = diffusion::moving_average(run.losses, 99);
  const double last = diffusion::moving_average(run.losses, run.losses.size() - 1);
  return {err < 0.1 && !mem.diverged && !run.diverged && last < first,
          "memorized eps error at t=T/2 " + fmt("%.4f", err) + " after 2000 steps; 100-trajectory moving average " +
              fmt("%.4f", first) + " -> " + fmt("%.4f", last)};
}

// ---------------------------------------------------------------- 8: guidance

double mean_collision(const std::vector<costs::GaussianTrajectory>& trajs, const env::EsdfGrid& grid,
                      const costs::CostWeights& w) {
  const Vec2 lo = grid.origin(), hi = grid.origin() + grid.extent();
  double total = 0.0;
  for (auto t : trajs) {
    // Means that left the grid are evaluated at the nearest grid point.
    for (auto& s : t.states) {
      s.x = std::clamp(s.x, lo.x(), hi.x());
      s.y = std::clamp(s.y, lo.y(), hi.y());
    }
    total += costs::collision_cost(t, grid, w.alpha, w.epsilon);
  }
  return total / static_cast<double>(trajs.size());
}

Outcome guidance_suite(const Trained& tr) {
  const auto& cfg = tr.cfg;
  const auto gp = cfg.macro.gp_model(tr.model.dt);
  auto unguided = cfg.macro.guidance;
  unguided.weight = 0.0;
  unguided.final_steps = 0;
  int wins = 0;
  std::string per;
  for (int s = 0; s < 20; ++s) {
    const std::uint64_t seed = derive_seed(808, streams::kScenario, s);
    const auto ws = env::generate_scenario(env::ScenarioKind::dense_obstacles, seed, cfg.scenario);
    const auto grid = env::build_esdf(ws, cfg.esdf_resolution);
    const auto sbox = prm::start_region(cfg.scenario, cfg.prm.bounds);
    const auto gbox = prm::goal_region(cfg.scenario, cfg.prm.bounds);
    const auto start = prm::sample_gaussian_node(ws, grid, cfg.prm, derive_seed(seed, streams::kGoal, 0), &sbox);
    const auto goal = prm::sample_gaussian_node(ws, grid, cfg.prm, derive_seed(seed, streams::kGoal, 1), &gbox);
    const auto req = diffusion::make_request(start, goal, grid);
    const std::uint64_t sample_seed = derive_seed(seed, streams::kSampling);
    const auto g = diffusion::guided_sample(tr.model, req, grid, cfg.macro.weights, gp, cfg.macro.guidance, 32,
                                            sample_seed);
    const auto u = diffusion::guided_sample(tr.model, req, grid, cfg.macro.weights, gp, unguided, 32, sample_seed);
    const double cg = mean_collision(g, grid, cfg.macro.weights), cu = mean_collision(u, grid, cfg.macro.weights);
    if (cg < cu) ++wins;
    per += (s ? " " : "") + fmt("%.2f", cg) + "/" + fmt("%.2f", cu);
  }
  return {wins >= 16, std::to_string(wins) + "/20 scenes guided < unguided (guided/unguided mean: " + per + ")"};
}

// ---------------------------------------------------------------- 9: end to end

struct RunResult {
  harness::MetricsReport report;
  int negative_frames = 0;
};

RunResult run_once(const harness::PlannerConfig& cfg, const diffusion::DiffusionModel& model, std::uint64_t seed,
                   double* t_macro_only = nullptr, bool simulate = true) {
  const auto scenario = harness::make_scenario(cfg, seed);
  const auto grid = env::build_esdf(scenario.workspace, cfg.esdf_resolution);
  const auto mission = harness::make_mission(cfg, scenario, grid, seed);
  const auto planned = harness::plan_mission(cfg, model, mission, grid, seed);
  if (t_macro_only) *t_macro_only = planned.T_macro;
  RunResult r;
  if (!simulate) return r;
  const auto run = harness::run_micro(cfg, planned.plan, mission, grid, seed);
  r.report = harness::make_report(run.log, planned.plan.size(), planned.T_macro, run.T_micro, harness::config_hash(cfg));
  for (const auto& f : run.log.frames) {
    if (f.d_obs < 0.0 || f.d_rob < 0.0) ++r.negative_frames;
  }
  return r;
}

Outcome end_to_end_suite(const Trained& tr) {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    try {
      const auto r = run_once(tr.cfg, tr.model, seed);
      const auto& m = r.report;
      const bool pass = m.success && r.negative_frames == 0 && m.D_bar <= 1.5 * m.D_lower && m.T_macro < 120.0;
      ok = ok && pass;
      detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + (pass ? " ok" : " FAIL") +
                " success=" + (m.success ? "1" : "0") + " negative_frames=" + std::to_string(r.negative_frames) +
                " D_bar/D_lower=" + fmt("%.3f", m.D_bar / m.D_lower) + " T_macro=" + fmt("%.1f", m.T_macro) + "s" +
                " d_obs=" + fmt("%.3f", m.d_obs) + " d_rob=" + fmt("%.3f", m.d_rob);
    } catch (const Error& e) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " error: " + e.what();
    }
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 10: scalability

Outcome scalability_suite(const Trained& tr) {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    try {
      auto c20 = tr.cfg, c100 = tr.cfg;
      c20.swarm.robots = 20;
      c100.swarm.robots = 100;
      double t20 = 0.0, t100 = 0.0;
      run_once(c20, tr.model, seed, &t20, false);
      run_once(c100, tr.model, seed, &t100, false);
      const double ratio = t100 / t20;
      const bool pass = ratio <= 2.0 && ratio >= 0.5;
      ok = ok && pass;
      detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " T_macro(20)=" +
                fmt("%.2f", t20) + "s T_macro(100)=" + fmt("%.2f", t100) + "s ratio " + fmt("%.2f", ratio);
    } catch (const Error& e) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " error: " + e.what();
    }
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 11: determinism

Outcome determinism_suite(const Trained& tr, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path model = dir / "model.ckpt";
  diffusion::write_checkpoint(model.string(), tr.model);
  const fs::path config = dir / "config.json";
  binio::write_text(config.string(), harness::config_to_json(tr.cfg).dump(2));
  auto cli = [&](std::vector<std::string> args) {
    std::ostringstream out, err;
    args.insert(args.begin(), {"--config", config.string(), "--seed", "2", "--threads", "1"});
    const int rc = harness::run_cli(args, out, err);
    if (rc != 0) throw Error("swarmdiff " + args[6] + " exited with " + std::to_string(rc) + ": " + err.str());
  };
  const std::vector<std::string> files{"data.bin", "plan.json", "log.jsonl", "plot.svg"};
  for (const char* run : {"a", "b"}) {
    const fs::path d = dir / run;
    fs::create_directories(d);
    cli({"gen-data", "--count", "10", "--out", (d / "data.bin").string()});
    cli({"plan", "--model", model.string(), "--out", (d / "plan.json").string()});
    cli({"simulate", "--plan", (d / "plan.json").string(), "--out", (d / "log.jsonl").string()});
    cli({"plot", "--plan", (d / "plan.json").string(), "--log", (d / "log.jsonl").string(), "--out",
         (d / "plot.svg").string()});
  }
  bool ok = true;
  std::string detail;
  for (const auto& f : files) {
    const bool same = binio::read_file((dir / "a" / f).string()) == binio::read_file((dir / "b" / f).string());
    ok = ok && same;
    detail += (detail.empty() ? "" : ", ") + f + (same ? " identical" : " DIFFERS");
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "swarmdiff_acceptance";
  fs::create_directories(work);

  Trained tr;
  tr.cfg = harness::PlannerConfig{};
  bool have_model = false;
  std::string setup_error;
  const double t0 = harness::now_seconds();
  try {
    std::printf("setup: building %d-record dataset and training %d steps...\n", tr.cfg.dataset_count,
                tr.cfg.train.steps);
    std::fflush(stdout);
    tr.data = prm::build_dataset(tr.cfg.dataset_config(), tr.cfg.seed, harness::data_hash(tr.cfg));
    const auto t = harness::train_model(tr.cfg, tr.data);
    tr.model = t.model;
    tr.final_loss = diffusion::moving_average(t.losses, t.losses.size() - 1);
    have_model = !t.diverged;
    if (t.diverged) setup_error = "training diverged: " + t.message;
    std::printf("setup: done in %.1f s, final moving-average loss %.4f\n", harness::now_seconds() - t0, tr.final_loss);
  } catch (const Error& e) {
    setup_error = e.what();
    std::printf("setup: failed: %s\n", e.what());
  }
  std::fflush(stdout);

  auto needs_model = [&](std::function<Outcome()> f) {
    return [&, f]() -> Outcome {
      if (!have_model) return {false, "no trained model: " + setup_error};
      return f();
    };
  };
  const std::vector<Criterion> criteria{
      {1, "closed-form W2 suite", 5, w2_suite},
      {2, "CVaR oracle suite", 5, cvar_suite},
      {3, "gradient fidelity", 60, gradient_suite},
      {4, "transport LP vs vertex enumeration", 30, lp_suite},
      {5, "assignment optimality", 30, assignment_suite},
      {6, "ESDF accuracy", 60, [&] { return esdf_suite(tr.cfg); }},
      {7, "diffusion training sanity", 600, needs_model([&] { return training_suite(tr); })},
      {8, "guidance efficacy", 900, needs_model([&] { return guidance_suite(tr); })},
      {9, "end-to-end 20 robots, 3 seeds", 1200, needs_model([&] { return end_to_end_suite(tr); })},
      {10, "T_macro flat in swarm size", 1e9, needs_model([&] { return scalability_suite(tr); })},
      {11, "byte-identical reruns", 1e9, needs_model([&] { return determinism_suite(tr, work / "determinism"); })},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const double start = harness::now_seconds();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = harness::now_seconds() - start;
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::string timing = fmt("%.1f s", secs);
    if (c.limit_s < 1e8) timing += " / limit " + fmt("%.0f s", c.limit_s);
    std::printf("criterion %2d: %s  %s (%s; %s)%s\n", c.id, pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                timing.c_str(), in_time ? "" : " [over time limit]");
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
