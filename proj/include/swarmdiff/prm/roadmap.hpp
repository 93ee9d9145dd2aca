#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmdiff/costs/costs.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/env/workspace.hpp"

namespace swarmdiff::prm {

using costs::GaussianTrajectory;
using gauss::GaussianState;

struct SigmaBounds {
  double sigma_min = 0.5;
  double sigma_max = 2.0;
  double rho_max = 0.5;

  void validate() const;
  bool operator==(const SigmaBounds&) const = default;
};

void to_json(nlohmann::json& j, const SigmaBounds& b);
void from_json(const nlohmann::json& j, SigmaBounds& b);

/// Axis-aligned region for node means.
struct Box {
  Vec2 lo;
  Vec2 hi;
};

struct PrmConfig {
  SigmaBounds bounds;
  double alpha = 0.1;
  /// Node and edge risk threshold [m]. Negative values demand extra clearance
  /// over the planner's own margin, which keeps training data away from the
  /// feasibility boundary.
  double epsilon = -1.0;
  int n_nodes = 500;
  int k_neighbors = 10;
  int path_nodes = 256;
  /// Largest 5-vector spacing between risk checks along an edge.
  double edge_step = 0.25;
  int max_node_attempts = 10000;

  void validate() const;
  bool operator==(const PrmConfig&) const = default;
};

void to_json(nlohmann::json& j, const PrmConfig& c);
void from_json(const nlohmann::json& j, PrmConfig& c);

/// CVaR risk test of a single node.
bool node_feasible(const GaussianState& s, const env::EsdfGrid& grid, double alpha, double epsilon);

/// Mean uniform over the free part of `region` (whole workspace when null),
/// shape uniform within bounds; resampled until CVaR <= epsilon. Throws
/// SamplingError naming `scene` when the budget runs out.
GaussianState sample_gaussian_node(const env::Workspace& ws, const env::EsdfGrid& grid, const PrmConfig& cfg,
                                   std::uint64_t seed, const Box* region = nullptr, const std::string& scene = "");

/// Checks the 5-vector interpolants a + (b - a) i / intervals for
/// i = 0..intervals. Doubling `intervals` checks a superset of points.
bool connect_edge(const GaussianState& a, const GaussianState& b, const env::EsdfGrid& grid, double alpha,
                  double epsilon, int intervals);

/// ceil(|b - a| / step) in the 5-vector norm, at least 1.
int edge_intervals(const GaussianState& a, const GaussianState& b, double step);

struct Edge {
  int i = 0;
  int j = 0;
  double cost = 0.0;  ///< wasserstein2(nodes[i], nodes[j])
};

struct GaussianRoadmap {
  std::vector<GaussianState> nodes;
  std::vector<Edge> edges;
  int start = 0;
  int goal = 1;
};

/// Roadmap over start, goal and cfg.n_nodes sampled nodes. Each node is
/// joined to its k nearest neighbours by W2 when the edge passes
/// connect_edge; the direct start-goal edge is always tried.
GaussianRoadmap build_roadmap(const env::Workspace& ws, const env::EsdfGrid& grid, const GaussianState& start,
                              const GaussianState& goal, const PrmConfig& cfg, std::uint64_t seed);

struct ShortestPath {
  double cost = 0.0;
  std::vector<int> nodes;  ///< source first, target last
};

/// Dijkstra over undirected edges; nullopt when target is unreachable.
std::optional<ShortestPath> shortest_path(int node_count, const std::vector<Edge>& edges, int source, int target);

/// Resamples a polyline to n nodes at equal W2 arc length; endpoints exact.
std::vector<GaussianState> resample_by_w2(const std::vector<GaussianState>& polyline, int n);

/// Sum of W2 between consecutive nodes.
double w2_length(const std::vector<GaussianState>& states);

/// Roadmap, shortest path and resampling to cfg.path_nodes nodes with
/// dt = 1. Every consecutive output pair passes connect_edge at
/// edge_intervals(cfg.edge_step). Throws PlanningError when the roadmap is
/// disconnected or the resampled path fails the recheck.
GaussianTrajectory plan_roadmap_path(const env::Workspace& ws, const env::EsdfGrid& grid, const GaussianState& start,
                                     const GaussianState& goal, const PrmConfig& cfg, std::uint64_t seed);

/// Evenly spaced indices round(i (n - 1) / (h - 1)), both endpoints included.
std::vector<int> subsample_indices(int n, int h);
GaussianTrajectory subsample(const GaussianTrajectory& traj, int h);

}  // namespace swarmdiff::prm
