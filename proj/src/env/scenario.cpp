#include "swarmdiff/env/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/rng.hpp"

namespace swarmdiff::env {
namespace {

ConvexPolygon rectangle(double x0, double y0, double x1, double y1) {
  return ConvexPolygon({Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)});
}

ConvexPolygon random_polygon(Rng& rng, const Vec2& center, double radius, int vertices) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (;;) {
    std::vector<double> a(static_cast<std::size_t>(vertices));
    for (auto& x : a) x = angle(rng);
    std::sort(a.begin(), a.end());
    Points pts;
    for (double t : a) pts.emplace_back(center + radius * Vec2(std::cos(t), std::sin(t)));
    // Reject slivers: a polygon inscribed in the circle should cover a
    // reasonable share of it.
    double area = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& p = pts[i];
      const auto& q = pts[(i + 1) % pts.size()];
      area += 0.5 * (p.x() * q.y() - p.y() * q.x());
    }
    if (area >= 0.25 * std::numbers::pi * radius * radius) return ConvexPolygon(std::move(pts));
  }
}

struct Band {
  double y_lo, y_hi;
};

void scatter_obstacles(Rng& rng, const ScenarioParams& p, std::vector<ConvexPolygon>& obstacles,
                       const Band* keep_free) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> nverts(p.min_vertices, p.max_vertices);
  const double x_lo = p.keepout_fraction * p.width;
  const double x_hi = (1.0 - p.keepout_fraction) * p.width;

  for (int k = 0; k < p.obstacle_count; ++k) {
    bool placed = false;
    int clearance_violations = 0;
    for (int attempt = 0; attempt < p.max_attempts && !placed; ++attempt) {
      const double r = p.min_radius + (p.max_radius - p.min_radius) * u01(rng);
      if (x_hi - x_lo < 2.0 * r || p.height < 2.0 * r) continue;
      const Vec2 c(x_lo + r + (x_hi - x_lo - 2.0 * r) * u01(rng), r + (p.height - 2.0 * r) * u01(rng));
      ConvexPolygon poly = random_polygon(rng, c, r, nverts(rng));
      bool ok = true;
      if (keep_free != nullptr) {
        if (poly.max_corner().y() > keep_free->y_lo - p.min_clearance &&
            poly.min_corner().y() < keep_free->y_hi + p.min_clearance) {
          ok = false;
        }
      }
      for (const auto& o : obstacles) {
        if (!ok) break;
        if (polygon_distance(o, poly) < p.min_clearance) {
          ok = false;
          ++clearance_violations;
        }
      }
      if (ok) {
        obstacles.push_back(std::move(poly));
        placed = true;
      }
    }
    if (!placed) {
      throw GenerationError("scenario generation exhausted " + std::to_string(p.max_attempts) +
                            " attempts placing obstacle " + std::to_string(k) +
                            ": minimum clearance " + std::to_string(p.min_clearance) +
                            " m violated " + std::to_string(clearance_violations) + " times");
    }
  }
}

}  // namespace

std::string to_string(ScenarioKind kind) {
  return kind == ScenarioKind::dense_obstacles ? "dense-obstacles" : "narrow-passages";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "dense-obstacles" || s == "dense") return ScenarioKind::dense_obstacles;
  if (s == "narrow-passages" || s == "narrow") return ScenarioKind::narrow_passages;
  throw ConfigError("unknown scenario kind '" + s + "'");
}

void to_json(nlohmann::json& j, const ScenarioParams& p) {
  j = nlohmann::json{{"width", p.width},
                     {"height", p.height},
                     {"obstacle_count", p.obstacle_count},
                     {"min_radius", p.min_radius},
                     {"max_radius", p.max_radius},
                     {"min_vertices", p.min_vertices},
                     {"max_vertices", p.max_vertices},
                     {"min_clearance", p.min_clearance},
                     {"keepout_fraction", p.keepout_fraction},
                     {"corridor_width", p.corridor_width},
                     {"wall_thickness", p.wall_thickness},
                     {"max_attempts", p.max_attempts}};
}

void from_json(const nlohmann::json& j, ScenarioParams& p) {
  ScenarioParams d;
  p.width = j.value("width", d.width);
  p.height = j.value("height", d.height);
  p.obstacle_count = j.value("obstacle_count", d.obstacle_count);
  p.min_radius = j.value("min_radius", d.min_radius);
  p.max_radius = j.value("max_radius", d.max_radius);
  p.min_vertices = j.value("min_vertices", d.min_vertices);
  p.max_vertices = j.value("max_vertices", d.max_vertices);
  p.min_clearance = j.value("min_clearance", d.min_clearance);
  p.keepout_fraction = j.value("keepout_fraction", d.keepout_fraction);
  p.corridor_width = j.value("corridor_width", d.corridor_width);
  p.wall_thickness = j.value("wall_thickness", d.wall_thickness);
  p.max_attempts = j.value("max_attempts", d.max_attempts);
}

Workspace generate_scenario(ScenarioKind kind, std::uint64_t seed, const ScenarioParams& p) {
  if (p.obstacle_count < 0 || p.min_radius <= 0.0 || p.max_radius < p.min_radius ||
      p.min_vertices < 3 || p.max_vertices < p.min_vertices || p.min_clearance < 0.0) {
    throw DomainError("invalid scenario parameters");
  }
  Rng rng = make_rng(seed, streams::kScenario);
  std::vector<ConvexPolygon> obstacles;

  if (kind == ScenarioKind::dense_obstacles) {
    scatter_obstacles(rng, p, obstacles, nullptr);
  } else {
    const double half = 0.5 * p.corridor_width;
    if (p.corridor_width <= 0.0 || p.corridor_width + 2.0 >= p.height ||
        p.wall_thickness <= 0.0 || p.wall_thickness >= p.width / 3.0) {
      throw DomainError("invalid corridor geometry for narrow-passages scenario");
    }
    std::uniform_real_distribution<double> gap(half + 1.0, p.height - half - 1.0);
    const double yc = gap(rng);
    const double x0 = 0.5 * (p.width - p.wall_thickness);
    const double x1 = 0.5 * (p.width + p.wall_thickness);
    obstacles.push_back(rectangle(x0, 0.0, x1, yc - half));
    obstacles.push_back(rectangle(x0, yc + half, x1, p.height));
    const Band band{yc - half, yc + half};
    scatter_obstacles(rng, p, obstacles, &band);
  }
  return Workspace(p.width, p.height, std::move(obstacles));
}

nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json obstacles = nlohmann::json::array();
  for (const auto& o : s.workspace.obstacles()) {
    nlohmann::json poly = nlohmann::json::array();
    for (const auto& v : o.vertices()) poly.push_back({v.x(), v.y()});
    obstacles.push_back(std::move(poly));
  }
  return nlohmann::json{{"width", s.workspace.width()},
                        {"height", s.workspace.height()},
                        {"obstacles", std::move(obstacles)},
                        {"seed", s.seed},
                        {"kind", to_string(s.kind)},
                        {"params", s.params}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
  std::vector<ConvexPolygon> obstacles;
  for (const auto& poly : j.at("obstacles")) {
    Points pts;
    for (const auto& v : poly) pts.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    obstacles.emplace_back(std::move(pts));
  }
  Scenario s{Workspace(j.at("width").get<double>(), j.at("height").get<double>(), std::move(obstacles)),
             scenario_kind_from_string(j.value("kind", std::string("dense-obstacles"))),
             j.value("seed", std::uint64_t{0}), ScenarioParams{}};
  if (j.contains("params")) s.params = j.at("params").get<ScenarioParams>();
  return s;
}

}  // namespace swarmdiff::env
