#include "swarmdiff/harness/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <tuple>

#include "swarmdiff/common/binary_io.hpp"
#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/rng.hpp"
#include "swarmdiff/costs/costs.hpp"

namespace swarmdiff::harness {

using nlohmann::json;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

env::Scenario make_scenario(const PlannerConfig& cfg, std::uint64_t seed) {
  return {env::generate_scenario(cfg.kind, seed, cfg.scenario), cfg.kind, seed, cfg.scenario};
}

json mission_to_json(const Mission& m) {
  auto points = [](const std::vector<Vec2>& ps) {
    json a = json::array();
    for (const auto& p : ps) a.push_back({p.x(), p.y()});
    return a;
  };
  return {{"scenario", env::scenario_to_json(m.scenario)},
          {"radius", m.radius},
          {"starts", points(m.starts)},
          {"goals", points(m.goals)},
          {"start_gmm", m.start_gmm},
          {"goal_gmm", m.goal_gmm}};
}

Mission mission_from_json(const json& j) {
  auto points = [](const json& a) {
    std::vector<Vec2> ps;
    for (const auto& p : a) ps.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    return ps;
  };
  try {
    Mission m{env::scenario_from_json(j.at("scenario")), j.at("radius").get<double>(), points(j.at("starts")),
              points(j.at("goals")), gauss::gmm_from_json(j.at("start_gmm")), gauss::gmm_from_json(j.at("goal_gmm"))};
    if (m.starts.size() != m.goals.size()) throw IoError("mission has different start and goal counts");
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("mission field error: ") + e.what());
  }
}

namespace {

std::vector<Vec2> place_robots(const PlannerConfig& cfg, const env::Workspace& ws, const prm::Box& region,
                               int clusters, std::uint64_t seed) {
  const int n = cfg.swarm.robots;
  const double r = cfg.swarm.radius;
  const double clearance = r + cfg.sim.mpc.safety_margin + 0.5;
  const double spacing = 2.0 * r + cfg.sim.mpc.safety_margin + 0.2;
  // Large clusters spread out so the spacing rule leaves room; capped so the
  // fitted covariances stay inside the sigma bounds.
  const double per_cluster = static_cast<double>(n) / clusters;
  const double spread =
      std::min(cfg.prm.bounds.sigma_max, cfg.swarm.spread * std::max(1.0, std::sqrt(per_cluster / 8.0)));

  Rng rng = make_rng(seed, streams::kRobots);
  std::uniform_real_distribution<double> ux(region.lo.x(), region.hi.x());
  std::uniform_real_distribution<double> uy(region.lo.y(), region.hi.y());
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Vec2> centres;
  for (int c = 0; c < clusters; ++c) {
    Vec2 p;
    int tries = 0;
    do {
      p = Vec2(ux(rng), uy(rng));
      if (++tries > 10000) throw GenerationError("no obstacle-free cluster centre in the endpoint region");
    } while (ws.signed_distance(p) < clearance + 2.0 * spread);
    centres.push_back(p);
  }

  std::vector<Vec2> out;
  const int budget = 20000 * n;
  int tries = 0;
  for (int k = 0; k < n; ++k) {
    const Vec2& c = centres[k % clusters];
    for (;;) {
      if (++tries > budget) {
        throw GenerationError("robot placement budget exhausted after " + std::to_string(k) + " of " +
                              std::to_string(n) + " robots");
      }
      const Vec2 p = c + spread * Vec2(z(rng), z(rng));
      if (!ws.in_bounds(p) || ws.signed_distance(p) < clearance) continue;
      if (std::any_of(out.begin(), out.end(), [&](const Vec2& q) { return (p - q).norm() < spacing; })) continue;
      out.push_back(p);
      break;
    }
  }
  return out;
}

gauss::Gmm fit_endpoint(const std::vector<Vec2>& pts, int k, const prm::SigmaBounds& b, std::uint64_t seed) {
  const gauss::Gmm raw = gauss::fit_gmm_em(pts, k, seed);
  std::vector<gauss::GaussianState> comps;
  for (auto s : raw.components()) {
    s.sigma_x = std::clamp(s.sigma_x, b.sigma_min, b.sigma_max);
    s.sigma_y = std::clamp(s.sigma_y, b.sigma_min, b.sigma_max);
    s.rho = std::clamp(s.rho, -b.rho_max, b.rho_max);
    comps.push_back(s);
  }
  return gauss::Gmm(std::move(comps), raw.weights());
}

}  // namespace

Mission make_mission(const PlannerConfig& cfg, const env::Scenario& scenario, const env::EsdfGrid& grid,
                     std::uint64_t seed) {
  Mission m{scenario, cfg.swarm.radius, {}, {}, gauss::Gmm{{gauss::GaussianState{}}, {1.0}},
            gauss::Gmm{{gauss::GaussianState{}}, {1.0}}};
  const auto& w = cfg.macro.weights;
  auto side = [&](const prm::Box& region, int k, std::uint64_t stream, std::uint64_t em_index, const char* name) {
    for (std::uint64_t round = 0; round < 100; ++round) {
      auto pts = place_robots(cfg, scenario.workspace, region, k, derive_seed(seed, stream, round));
      auto gmm = fit_endpoint(pts, k, cfg.prm.bounds, derive_seed(seed, streams::kEm, 2 * round + em_index));
      const bool ok = std::all_of(gmm.components().begin(), gmm.components().end(), [&](const auto& c) {
        return grid.contains(c.mean()) && costs::cvar_collision(c, grid, w.alpha) <= w.epsilon;
      });
      if (ok) return std::pair{std::move(pts), std::move(gmm)};
    }
    throw GenerationError(std::string("no risk-feasible ") + name + " placement in 100 rounds");
  };
  std::tie(m.starts, m.start_gmm) =
      side(prm::start_region(scenario.params, cfg.prm.bounds), cfg.swarm.start_components(), streams::kRobots, 0, "start");
  std::tie(m.goals, m.goal_gmm) =
      side(prm::goal_region(scenario.params, cfg.prm.bounds), cfg.swarm.goal_components(), streams::kGoal, 1, "goal");
  return m;
}

diffusion::DiffusionModel init_model(const PlannerConfig& cfg, const prm::Dataset& data) {
  const auto trajs = prm::training_trajectories(data);
  if (trajs.empty()) throw DomainError("dataset has no records");
  diffusion::DiffusionModel m;
  m.denoiser = cfg.model.denoiser;
  m.normalizer = diffusion::Normalizer::fit(trajs);
  m.schedule = diffusion::NoiseSchedule::cosine(cfg.model.diffusion_steps);
  m.horizon = cfg.model.horizon;
  m.dt = trajs.front().dt;
  m.params = diffusion::Denoiser<float>::initial_parameters(m.denoiser, derive_seed(cfg.train.seed, streams::kInit));
  m.step = 0;
  m.config_hash = model_hash(cfg);
  return m;
}

TrainOutcome train_model(const PlannerConfig& cfg, const prm::Dataset& data, const diffusion::DiffusionModel* resume,
                         const std::function<void(std::uint64_t, double)>& on_step, Exec exec) {
  if (data.config.horizon != cfg.model.horizon) {
    throw DomainError("dataset horizon H=" + std::to_string(data.config.horizon) +
                      " does not match model horizon H=" + std::to_string(cfg.model.horizon));
  }
  TrainOutcome out;
  if (resume != nullptr) {
    if (resume->horizon != cfg.model.horizon) throw DomainError("checkpoint horizon does not match the config");
    if (!(resume->denoiser == cfg.model.denoiser)) throw DomainError("checkpoint architecture does not match the config");
    out.model = *resume;
  } else {
    out.model = init_model(cfg, data);
  }
  const auto examples = prm::training_examples(data, out.model.normalizer);
  out.first_step = out.model.step;
  auto result = diffusion::train(out.model.denoiser, out.model.params, out.model.step, examples, out.model.schedule,
                                 cfg.train, on_step, exec);
  out.model.params = std::move(result.params);
  out.model.step = result.step;
  out.model.config_hash = model_hash(cfg);
  out.losses = std::move(result.losses);
  out.diverged = result.diverged;
  out.message = std::move(result.message);
  return out;
}

std::string loss_curve_csv(const std::vector<double>& losses, std::uint64_t first_step) {
  std::string s = "step,loss,moving_average\n";
  char buf[96];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g\n", static_cast<unsigned long long>(first_step + i + 1), losses[i],
                  diffusion::moving_average(losses, i));
    s += buf;
  }
  return s;
}

PlanOutcome plan_mission(const PlannerConfig& cfg, const diffusion::DiffusionModel& model, const Mission& mission,
                         const env::EsdfGrid& grid, std::uint64_t seed, Exec exec) {
  PlanOutcome out;
  const double t0 = now_seconds();
  out.plan = macro::plan_macro(grid, mission.start_gmm, mission.goal_gmm, cfg.macro, model, seed, &out.stats, exec);
  out.T_macro = now_seconds() - t0;
  out.plan.config_hash = config_hash(cfg);
  return out;
}

json plan_file_json(const macro::GmmTrajectory& plan, const Mission& mission) {
  json j = macro::plan_to_json(plan);
  j["mission"] = mission_to_json(mission);
  return j;
}

void write_plan_file(const std::string& path, const macro::GmmTrajectory& plan, const Mission& mission) {
  binio::write_text(path, plan_file_json(plan, mission).dump() + "\n");
}

std::pair<macro::GmmTrajectory, Mission> read_plan_file(const std::string& path) {
  const auto bytes = binio::read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw IoError("plan '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("mission")) throw IoError("plan '" + path + "' has no mission");
  return {macro::plan_from_json(j), mission_from_json(j.at("mission"))};
}

RunOutcome run_micro(const PlannerConfig& cfg, const macro::GmmTrajectory& plan, const Mission& mission,
                     const env::EsdfGrid& grid, std::uint64_t seed, Exec exec) {
  RunOutcome out;
  const auto robots = micro::robots_from_positions(mission.starts, mission.radius);
  micro::SimConfig sim = cfg.sim;
  const double t0 = now_seconds();
  out.log = micro::simulate(robots, plan, grid, mission.scenario.workspace, sim, seed, &out.stats, exec);
  out.T_micro = now_seconds() - t0;
  out.log.config_hash = config_hash(cfg);
  return out;
}

double straight_line_bound(const micro::SwarmLog& log) {
  if (log.frames.empty() || log.frames.front().positions.empty()) return 0.0;
  const auto& a = log.frames.front().positions;
  const auto& b = log.frames.back().positions;
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (b[k] - a[k]).norm();
  return s / static_cast<double>(a.size());
}

MetricsReport make_report(const micro::SwarmLog& log, std::size_t components, double T_macro, double T_micro,
                          const std::string& hash) {
  const auto m = micro::reduce_log(log);
  MetricsReport r;
  r.T_macro = T_macro;
  r.T_micro = T_micro;
  r.T_sol = T_macro + T_micro;
  r.D_bar = m.D_bar;
  r.d_obs = m.d_obs;
  r.d_rob = m.d_rob;
  r.success = m.success;
  r.seed = log.seed;
  r.config_hash = hash;
  r.robots = static_cast<int>(log.radii.size());
  r.components = static_cast<int>(components);
  r.D_lower = straight_line_bound(log);
  r.steps = m.steps;
  r.relaxed_steps = log.relaxed_steps;
  r.hard_stops = log.hard_stops;
  r.far_robots = log.far_robots;
  return r;
}

json report_to_json(const MetricsReport& r) {
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"T_sol", r.T_sol},
          {"T_macro", r.T_macro},
          {"T_micro", r.T_micro},
          {"D_bar", r.D_bar},
          {"d_obs", finite(r.d_obs)},
          {"d_rob", finite(r.d_rob)},
          {"success", r.success},
          {"seed", r.seed},
          {"config_hash", r.config_hash},
          {"robots", r.robots},
          {"components", r.components},
          {"D_lower", r.D_lower},
          {"model_load", r.model_load},
          {"steps", r.steps},
          {"relaxed_steps", r.relaxed_steps},
          {"hard_stops", r.hard_stops},
          {"far_robots", r.far_robots}};
}

}  // namespace swarmdiff::harness
