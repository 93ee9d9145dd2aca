#include "swarmdiff/macro/planner.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/parallel.hpp"
#include "swarmdiff/common/rng.hpp"
#include "swarmdiff/macro/transport.hpp"

namespace swarmdiff::macro {
namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != n) throw DomainError("ragged matrix in plan file");
    for (std::size_t k = 0; k < n; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return m;
}

Eigen::VectorXd weights_of(const gauss::Gmm& g) {
  return Eigen::Map<const Eigen::VectorXd>(g.weights().data(), static_cast<Eigen::Index>(g.size()));
}

void require_feasible(const gauss::Gmm& g, const char* side, const env::EsdfGrid& grid, const costs::CostWeights& w) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& c = g.component(i);
    if (!grid.contains(c.mean()) || costs::cvar_collision(c, grid, w.alpha) > w.epsilon) {
      throw PlanningError(std::string(side) + " component " + std::to_string(i) + " is not risk-feasible");
    }
  }
}

bool inside(const GaussianTrajectory& t, const env::EsdfGrid& grid) {
  for (const auto& s : t.states) {
    if (!grid.contains(s.mean())) return false;
  }
  return true;
}

}  // namespace

void GmmTrajectory::validate() const {
  const auto k = trajectories.size();
  if (k == 0) throw DomainError("plan has no trajectories");
  if (alphas.size() != k || pairs.size() != k) throw DomainError("plan alphas, pairs and trajectories differ in size");
  const auto n1 = static_cast<Eigen::Index>(start_gmm.size());
  const auto n2 = static_cast<Eigen::Index>(goal_gmm.size());
  if (plan.rows() != n1 || plan.cols() != n2) throw DomainError("plan matrix shape does not match the endpoint GMMs");
  double sum = 0.0;
  for (double a : alphas) {
    if (!(a >= 0.0)) throw DomainError("plan alphas must be nonnegative");
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("plan alphas do not sum to 1");
  for (Eigen::Index i = 0; i < n1; ++i) {
    if (std::abs(plan.row(i).sum() - start_gmm.weight(static_cast<std::size_t>(i))) > 1e-8) {
      throw DomainError("plan row sums do not match the start weights");
    }
  }
  for (Eigen::Index j = 0; j < n2; ++j) {
    if (std::abs(plan.col(j).sum() - goal_gmm.weight(static_cast<std::size_t>(j))) > 1e-8) {
      throw DomainError("plan column sums do not match the goal weights");
    }
  }
  if (static_cast<std::size_t>((plan.array() > 0.0).count()) != k) {
    throw DomainError("plan trajectory count differs from the positive plan entries");
  }
  for (std::size_t t = 0; t < k; ++t) {
    const auto [i, j] = pairs[t];
    if (i < 0 || i >= n1 || j < 0 || j >= n2 || plan(i, j) != alphas[t]) {
      throw DomainError("plan pair does not match its transport entry");
    }
    trajectories[t].validate();
    if (trajectories[t].size() != trajectories.front().size()) throw DomainError("plan trajectories differ in length");
  }
}

nlohmann::json plan_to_json(const GmmTrajectory& g) {
  auto trajs = nlohmann::json::array();
  for (std::size_t t = 0; t < g.size(); ++t) {
    trajs.push_back({{"pair", {g.pairs[t].first, g.pairs[t].second}},
                     {"alpha", g.alphas[t]},
                     {"dt", g.trajectories[t].dt},
                     {"states", g.trajectories[t].states}});
  }
  return {{"format", "swarmdiff-plan"},
          {"version", 1},
          {"seed", g.seed},
          {"config_hash", g.config_hash},
          {"alphas", g.alphas},
          {"plan", matrix_to_json(g.plan)},
          {"costs", matrix_to_json(g.costs)},
          {"start_gmm", g.start_gmm},
          {"goal_gmm", g.goal_gmm},
          {"trajectories", trajs}};
}

GmmTrajectory plan_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "swarmdiff-plan") throw IoError("not a swarmdiff plan");
  GmmTrajectory g;
  try {
    g.seed = j.at("seed").get<std::uint64_t>();
    g.config_hash = j.at("config_hash").get<std::string>();
    g.alphas = j.at("alphas").get<std::vector<double>>();
    g.plan = matrix_from_json(j.at("plan"));
    g.costs = matrix_from_json(j.at("costs"));
    g.start_gmm = gauss::gmm_from_json(j.at("start_gmm"));
    g.goal_gmm = gauss::gmm_from_json(j.at("goal_gmm"));
    for (const auto& t : j.at("trajectories")) {
      g.pairs.emplace_back(t.at("pair").at(0).get<int>(), t.at("pair").at(1).get<int>());
      GaussianTrajectory tr;
      tr.dt = t.at("dt").get<double>();
      tr.states = t.at("states").get<std::vector<gauss::GaussianState>>();
      g.trajectories.push_back(std::move(tr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("plan field error: ") + e.what());
  }
  g.validate();
  return g;
}

void MacroParams::validate() const {
  if (samples_per_pair < 1) throw DomainError("samples_per_pair must be >= 1");
  weights.validate();
  if (!(q_pos > 0.0) || !(q_shape > 0.0)) throw DomainError("GP spectral densities must be positive");
  guidance.validate();
  if (!(hard_cap >= 0.0)) throw DomainError("hard_cap must be nonnegative");
  if (!(merge_threshold >= 0.0)) throw DomainError("merge_threshold must be nonnegative");
}

costs::GpModel MacroParams::gp_model(double dt) const { return costs::GpModel::constant_velocity(dt, q_pos, q_shape); }

void to_json(nlohmann::json& j, const MacroParams& p) {
  j = {{"samples_per_pair", p.samples_per_pair}, {"weights", p.weights},   {"q_pos", p.q_pos},
       {"q_shape", p.q_shape},                   {"guidance", p.guidance}, {"hard_cap", p.hard_cap},
       {"merge_threshold", p.merge_threshold}};
}

void from_json(const nlohmann::json& j, MacroParams& p) {
  const MacroParams d;
  p.samples_per_pair = j.value("samples_per_pair", d.samples_per_pair);
  p.weights = j.value("weights", d.weights);
  p.q_pos = j.value("q_pos", d.q_pos);
  p.q_shape = j.value("q_shape", d.q_shape);
  p.guidance = j.value("guidance", d.guidance);
  p.hard_cap = j.value("hard_cap", d.hard_cap);
  p.merge_threshold = j.value("merge_threshold", d.merge_threshold);
}

Eigen::MatrixXd pairwise_trajectory_costs(const std::map<std::pair<int, int>, GaussianTrajectory>& trajs, int n1,
                                          int n2, const env::EsdfGrid& grid, const costs::CostWeights& weights,
                                          const costs::GpModel& gp) {
  Eigen::MatrixXd c(n1, n2);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const auto it = trajs.find({i, j});
      if (it == trajs.end()) {
        throw PlanningError("no trajectory for pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      c(i, j) = costs::total_cost(it->second, grid, weights, gp);
      if (!std::isfinite(c(i, j))) {
        throw PlanningError("non-finite cost for pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  return c;
}

GmmTrajectory plan_macro(const env::EsdfGrid& grid, const gauss::Gmm& start_gmm, const gauss::Gmm& goal_gmm,
                         const MacroParams& params, const diffusion::DiffusionModel& model, std::uint64_t seed,
                         MacroStats* stats, Exec exec) {
  params.validate();
  require_feasible(start_gmm, "start", grid, params.weights);
  require_feasible(goal_gmm, "goal", grid, params.weights);
  const int n1 = static_cast<int>(start_gmm.size());
  const int n2 = static_cast<int>(goal_gmm.size());
  const int pairs = n1 * n2;
  const auto gp = params.gp_model(model.dt);

  // One pair uses the threads for its chains; several pairs run in parallel
  // with serial chains. Chain seeds are fixed either way.
  const Exec outer = pairs > 1 ? exec : Exec::serial;
  const Exec inner = pairs > 1 ? Exec::serial : exec;
  std::vector<GaussianTrajectory> best(static_cast<std::size_t>(pairs));
  std::vector<int> oob(static_cast<std::size_t>(pairs), 0);
  parallel_for(pairs, outer, [&](std::ptrdiff_t p) {
    const int i = static_cast<int>(p) / n2;
    const int j = static_cast<int>(p) % n2;
    const auto req = diffusion::make_request(start_gmm.component(i), goal_gmm.component(j), grid);
    diffusion::SampleStats st;
    const auto samples =
        diffusion::guided_sample(model, req, grid, params.weights, gp, params.guidance, params.samples_per_pair,
                                 derive_seed(seed, streams::kSampling, static_cast<std::uint64_t>(p)), &st, inner);
    oob[p] = st.out_of_bounds;
    // Samples that leave the grid have no defined cost and are skipped.
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& sample : samples) {
      if (!inside(sample, grid)) continue;
      const double c = costs::total_cost(sample, grid, params.weights, gp);
      if (c < best_cost) {
        best_cost = c;
        best[p] = sample;
      }
    }
    if (best[p].states.empty()) {
      throw PlanningError("pair (" + std::to_string(i) + ", " + std::to_string(j) +
                          "): every sample left the workspace");
    }
  });
  if (stats != nullptr) stats->out_of_bounds = std::accumulate(oob.begin(), oob.end(), 0);

  std::map<std::pair<int, int>, GaussianTrajectory> by_pair;
  for (int p = 0; p < pairs; ++p) {
    const int i = p / n2;
    const int j = p % n2;
    const double coll = costs::collision_cost(best[p], grid, params.weights.alpha, params.weights.epsilon);
    if (coll > params.hard_cap) {
      throw PlanningError("pair (" + std::to_string(i) + ", " + std::to_string(j) + ") best collision cost " +
                          std::to_string(coll) + " exceeds the hard cap " + std::to_string(params.hard_cap));
    }
    by_pair.emplace(std::make_pair(i, j), best[p]);
  }

  GmmTrajectory g;
  g.start_gmm = start_gmm;
  g.goal_gmm = goal_gmm;
  g.seed = seed;
  g.config_hash = model.config_hash;
  g.costs = pairwise_trajectory_costs(by_pair, n1, n2, grid, params.weights, gp);
  g.plan = solve_transport_lp(g.costs, weights_of(start_gmm), weights_of(goal_gmm));
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      if (g.plan(i, j) <= 0.0) continue;
      g.trajectories.push_back(by_pair.at({i, j}));
      g.alphas.push_back(g.plan(i, j));
      g.pairs.emplace_back(i, j);
    }
  }
  return g;
}

gauss::GaussianState moment_match(const std::vector<gauss::GaussianState>& states, const std::vector<double>& weights) {
  double total = 0.0;
  Vec2 mu = Vec2::Zero();
  for (std::size_t k = 0; k < states.size(); ++k) {
    total += weights[k];
    mu += weights[k] * states[k].mean();
  }
  if (!(total > 0.0)) throw DomainError("moment matching needs positive total weight");
  mu /= total;
  Mat2 cov = Mat2::Zero();
  for (std::size_t k = 0; k < states.size(); ++k) {
    const Vec2 d = states[k].mean() - mu;
    cov += weights[k] * (states[k].covariance() + d * d.transpose());
  }
  return gauss::GaussianState::from_covariance(mu, cov / total);
}

gauss::Gmm evaluate_gmm_at(const GmmTrajectory& g, int t, double merge_threshold) {
  if (t < 0 || t >= g.horizon()) throw DomainError("evaluate_gmm_at index out of range");
  struct Cluster {
    std::vector<gauss::GaussianState> members;
    std::vector<double> weights;
    gauss::GaussianState merged;
    double weight = 0.0;
  };
  std::vector<Cluster> clusters;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto& s = g.trajectories[k].states[static_cast<std::size_t>(t)];
    const double a = g.alphas[k];
    Cluster* target = nullptr;
    for (auto& c : clusters) {
      if (gauss::wasserstein2(c.merged, s) < merge_threshold) {
        target = &c;
        break;
      }
    }
    if (target == nullptr) {
      clusters.push_back({{s}, {a}, s, a});
      continue;
    }
    target->members.push_back(s);
    target->weights.push_back(a);
    target->weight += a;
    target->merged = moment_match(target->members, target->weights);
  }
  double total = 0.0;
  for (const auto& c : clusters) total += c.weight;
  std::vector<gauss::GaussianState> comps;
  std::vector<double> w;
  for (const auto& c : clusters) {
    comps.push_back(c.merged);
    w.push_back(c.weight / total);
  }
  return gauss::Gmm(std::move(comps), std::move(w));
}

}  // namespace swarmdiff::macro
