#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "swarmdiff/env/workspace.hpp"

namespace swarmdiff::env {

enum class ScenarioKind { dense_obstacles, narrow_passages };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct ScenarioParams {
  double width = 100.0;
  double height = 80.0;
  int obstacle_count = 5;
  double min_radius = 4.0;   ///< circumradius range of random obstacles [m]
  double max_radius = 9.0;
  int min_vertices = 4;
  int max_vertices = 8;
  double min_clearance = 4.0;     ///< minimum gap between any two obstacles [m]
  double keepout_fraction = 0.2;  ///< left/right strips kept free for start and goal regions
  double corridor_width = 4.0;    ///< narrow-passages only
  double wall_thickness = 4.0;    ///< narrow-passages only
  int max_attempts = 2000;        ///< rejection-sampling budget per obstacle

  bool operator==(const ScenarioParams&) const = default;
};

void to_json(nlohmann::json& j, const ScenarioParams& p);
void from_json(const nlohmann::json& j, ScenarioParams& p);

/// Deterministic procedural scene. dense_obstacles scatters random convex
/// polygons; narrow_passages adds a full-height wall across the middle third
/// with one corridor of `corridor_width`, whose horizontal band is kept free.
Workspace generate_scenario(ScenarioKind kind, std::uint64_t seed, const ScenarioParams& params);

struct Scenario {
  Workspace workspace;
  ScenarioKind kind = ScenarioKind::dense_obstacles;
  std::uint64_t seed = 0;
  ScenarioParams params;
};

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

}  // namespace swarmdiff::env
