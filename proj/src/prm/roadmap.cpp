#include "swarmdiff/prm/roadmap.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <set>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/rng.hpp"

namespace swarmdiff::prm {

void SigmaBounds::validate() const {
  if (!(sigma_min >= gauss::kMinSigma)) throw DomainError("sigma_min must be at least 1e-4");
  if (!(sigma_max >= sigma_min)) throw DomainError("sigma_max must be >= sigma_min");
  if (!(rho_max >= 0.0 && rho_max <= gauss::kMaxAbsRho)) throw DomainError("rho_max must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const SigmaBounds& b) {
  j = {{"sigma_min", b.sigma_min}, {"sigma_max", b.sigma_max}, {"rho_max", b.rho_max}};
}

void from_json(const nlohmann::json& j, SigmaBounds& b) {
  const SigmaBounds d;
  b.sigma_min = j.value("sigma_min", d.sigma_min);
  b.sigma_max = j.value("sigma_max", d.sigma_max);
  b.rho_max = j.value("rho_max", d.rho_max);
}

void PrmConfig::validate() const {
  bounds.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("prm alpha must lie in (0, 1)");
  if (!std::isfinite(epsilon)) throw DomainError("prm epsilon must be finite");
  if (n_nodes < 0) throw DomainError("prm n_nodes must be nonnegative");
  if (k_neighbors < 1) throw DomainError("prm k_neighbors must be >= 1");
  if (path_nodes < 2) throw DomainError("prm path_nodes must be >= 2");
  if (!(edge_step > 0.0)) throw DomainError("prm edge_step must be positive");
  if (max_node_attempts < 1) throw DomainError("prm max_node_attempts must be >= 1");
}

void to_json(nlohmann::json& j, const PrmConfig& c) {
  j = {{"bounds", c.bounds},       {"alpha", c.alpha},
       {"epsilon", c.epsilon},     {"n_nodes", c.n_nodes},
       {"k_neighbors", c.k_neighbors}, {"path_nodes", c.path_nodes},
       {"edge_step", c.edge_step}, {"max_node_attempts", c.max_node_attempts}};
}

void from_json(const nlohmann::json& j, PrmConfig& c) {
  const PrmConfig d;
  c.bounds = j.value("bounds", d.bounds);
  c.alpha = j.value("alpha", d.alpha);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.n_nodes = j.value("n_nodes", d.n_nodes);
  c.k_neighbors = j.value("k_neighbors", d.k_neighbors);
  c.path_nodes = j.value("path_nodes", d.path_nodes);
  c.edge_step = j.value("edge_step", d.edge_step);
  c.max_node_attempts = j.value("max_node_attempts", d.max_node_attempts);
}

bool node_feasible(const GaussianState& s, const env::EsdfGrid& grid, double alpha, double epsilon) {
  if (!grid.contains(s.mean())) return false;
  return costs::cvar_collision(s, grid, alpha) <= epsilon;
}

GaussianState sample_gaussian_node(const env::Workspace& ws, const env::EsdfGrid& grid, const PrmConfig& cfg,
                                   std::uint64_t seed, const Box* region, const std::string& scene) {
  const Box whole{Vec2(0.0, 0.0), Vec2(ws.width(), ws.height())};
  const Box& box = region != nullptr ? *region : whole;
  if (!(box.hi.x() >= box.lo.x() && box.hi.y() >= box.lo.y())) throw DomainError("empty sampling region");
  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto& b = cfg.bounds;
  for (int attempt = 0; attempt < cfg.max_node_attempts; ++attempt) {
    GaussianState s;
    s.x = box.lo.x() + (box.hi.x() - box.lo.x()) * u01(rng);
    s.y = box.lo.y() + (box.hi.y() - box.lo.y()) * u01(rng);
    s.sigma_x = b.sigma_min + (b.sigma_max - b.sigma_min) * u01(rng);
    s.sigma_y = b.sigma_min + (b.sigma_max - b.sigma_min) * u01(rng);
    s.rho = b.rho_max * (2.0 * u01(rng) - 1.0);
    if (!grid.contains(s.mean()) || grid.query(s.mean()).distance <= 0.0) continue;
    if (node_feasible(s, grid, cfg.alpha, cfg.epsilon)) return s;
  }
  throw SamplingError("node rejection budget of " + std::to_string(cfg.max_node_attempts) +
                      " exhausted in scene '" + scene + "'");
}

bool connect_edge(const GaussianState& a, const GaussianState& b, const env::EsdfGrid& grid, double alpha,
                  double epsilon, int intervals) {
  if (intervals < 1) throw DomainError("connect_edge needs at least one interval");
  const Vec5 va = a.to_vector();
  const Vec5 d = b.to_vector() - va;
  for (int i = 0; i <= intervals; ++i) {
    const double t = static_cast<double>(i) / intervals;
    const auto s = GaussianState::from_vector(va + t * d);
    if (!node_feasible(s, grid, alpha, epsilon)) return false;
  }
  return true;
}

int edge_intervals(const GaussianState& a, const GaussianState& b, double step) {
  const double len = (b.to_vector() - a.to_vector()).norm();
  return std::max(1, static_cast<int>(std::ceil(len / step)));
}

GaussianRoadmap build_roadmap(const env::Workspace& ws, const env::EsdfGrid& grid, const GaussianState& start,
                              const GaussianState& goal, const PrmConfig& cfg, std::uint64_t seed) {
  GaussianRoadmap rm;
  rm.nodes.push_back(start);
  rm.nodes.push_back(goal);
  for (int i = 0; i < cfg.n_nodes; ++i) {
    rm.nodes.push_back(sample_gaussian_node(ws, grid, cfg, derive_seed(seed, streams::kPrm, i)));
  }
  const int n = static_cast<int>(rm.nodes.size());

  std::set<std::pair<int, int>> candidates{{0, 1}};
  std::vector<std::pair<double, int>> dist;
  for (int i = 0; i < n; ++i) {
    dist.clear();
    for (int j = 0; j < n; ++j) {
      if (j != i) dist.emplace_back(gauss::wasserstein2(rm.nodes[i], rm.nodes[j]), j);
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k_neighbors), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t m = 0; m < k; ++m) candidates.emplace(std::min(i, dist[m].second), std::max(i, dist[m].second));
  }
  for (const auto& [i, j] : candidates) {
    const auto& a = rm.nodes[i];
    const auto& b = rm.nodes[j];
    if (connect_edge(a, b, grid, cfg.alpha, cfg.epsilon, edge_intervals(a, b, cfg.edge_step))) {
      rm.edges.push_back({i, j, gauss::wasserstein2(a, b)});
    }
  }
  return rm;
}

std::optional<ShortestPath> shortest_path(int node_count, const std::vector<Edge>& edges, int source, int target) {
  if (source < 0 || source >= node_count || target < 0 || target >= node_count) {
    throw DomainError("shortest_path endpoint out of range");
  }
  std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(node_count));
  for (const auto& e : edges) {
    if (!(e.cost >= 0.0)) throw DomainError("negative or NaN edge cost");
    adj[e.i].emplace_back(e.j, e.cost);
    adj[e.j].emplace_back(e.i, e.cost);
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(static_cast<std::size_t>(node_count), inf);
  std::vector<int> prev(static_cast<std::size_t>(node_count), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  best[source] = 0.0;
  open.emplace(0.0, source);
  while (!open.empty()) {
    const auto [d, u] = open.top();
    open.pop();
    if (d > best[u]) continue;
    if (u == target) break;
    for (const auto& [v, w] : adj[u]) {
      if (d + w < best[v]) {
        best[v] = d + w;
        prev[v] = u;
        open.emplace(best[v], v);
      }
    }
  }
  if (best[target] == inf) return std::nullopt;
  ShortestPath sp;
  sp.cost = best[target];
  for (int v = target; v != -1; v = prev[v]) sp.nodes.push_back(v);
  std::reverse(sp.nodes.begin(), sp.nodes.end());
  return sp;
}

double w2_length(const std::vector<GaussianState>& states) {
  double total = 0.0;
  for (std::size_t i = 1; i < states.size(); ++i) total += gauss::wasserstein2(states[i - 1], states[i]);
  return total;
}

std::vector<GaussianState> resample_by_w2(const std::vector<GaussianState>& polyline, int n) {
  if (polyline.empty()) throw DomainError("cannot resample an empty polyline");
  if (n < 2) throw DomainError("resample needs at least two output nodes");
  std::vector<double> cum(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i) {
    cum[i] = cum[i - 1] + gauss::wasserstein2(polyline[i - 1], polyline[i]);
  }
  const double total = cum.back();
  std::vector<GaussianState> out(static_cast<std::size_t>(n), polyline.front());
  if (total > 0.0) {
    std::size_t seg = 1;
    for (int m = 1; m + 1 < n; ++m) {
      const double target = total * m / (n - 1);
      while (seg + 1 < cum.size() && cum[seg] < target) ++seg;
      const double len = cum[seg] - cum[seg - 1];
      const double u = len > 0.0 ? std::clamp((target - cum[seg - 1]) / len, 0.0, 1.0) : 0.0;
      const Vec5 a = polyline[seg - 1].to_vector();
      out[m] = GaussianState::from_vector(a + u * (polyline[seg].to_vector() - a));
    }
  }
  out.back() = polyline.back();
  return out;
}

GaussianTrajectory plan_roadmap_path(const env::Workspace& ws, const env::EsdfGrid& grid, const GaussianState& start,
                                     const GaussianState& goal, const PrmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!node_feasible(start, grid, cfg.alpha, cfg.epsilon)) throw PlanningError("start node is not risk-feasible");
  if (!node_feasible(goal, grid, cfg.alpha, cfg.epsilon)) throw PlanningError("goal node is not risk-feasible");
  const auto rm = build_roadmap(ws, grid, start, goal, cfg, seed);
  const auto sp = shortest_path(static_cast<int>(rm.nodes.size()), rm.edges, rm.start, rm.goal);
  if (!sp) throw PlanningError("no path: roadmap is disconnected between start and goal");

  std::vector<GaussianState> poly;
  for (int v : sp->nodes) poly.push_back(rm.nodes[v]);
  GaussianTrajectory traj;
  traj.dt = 1.0;
  traj.states = resample_by_w2(poly, cfg.path_nodes);
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    const auto& a = traj.states[i - 1];
    const auto& b = traj.states[i];
    if (!connect_edge(a, b, grid, cfg.alpha, cfg.epsilon, edge_intervals(a, b, cfg.edge_step))) {
      throw PlanningError("resampled path fails the edge recheck at node " + std::to_string(i));
    }
  }
  return traj;
}

std::vector<int> subsample_indices(int n, int h) {
  if (h < 2 || n < 2 || h > n) throw DomainError("subsample needs 2 <= h <= n");
  std::vector<int> idx(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    idx[i] = static_cast<int>(std::lround(static_cast<double>(i) * (n - 1) / (h - 1)));
  }
  return idx;
}

GaussianTrajectory subsample(const GaussianTrajectory& traj, int h) {
  const int n = static_cast<int>(traj.size());
  GaussianTrajectory out;
  out.dt = traj.dt * (n - 1) / (h - 1);
  for (int i : subsample_indices(n, h)) out.states.push_back(traj.states[i]);
  return out;
}

}  // namespace swarmdiff::prm
