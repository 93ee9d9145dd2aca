#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support/oracles.hpp"
#include "swarmdiff/common/error.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/env/scenario.hpp"

using namespace swarmdiff;
using namespace swarmdiff::env;

namespace {

Workspace square_scene() {
  return Workspace(10.0, 10.0, {ConvexPolygon({Vec2(4, 4), Vec2(6, 4), Vec2(6, 6), Vec2(4, 6)})});
}

std::vector<std::vector<oracle::P2>> polys_of(const Workspace& ws) {
  std::vector<std::vector<oracle::P2>> out;
  for (const auto& o : ws.obstacles()) out.push_back(o.vertices());
  return out;
}

Workspace random_scene(std::uint64_t seed) {
  ScenarioParams p;
  p.width = 40.0;
  p.height = 30.0;
  p.obstacle_count = 5;
  p.min_radius = 2.0;
  p.max_radius = 5.0;
  p.min_clearance = 1.0;
  p.keepout_fraction = 0.0;
  return generate_scenario(ScenarioKind::dense_obstacles, seed, p);
}

double angle_between(const Vec2& a, const Vec2& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("polygon validation") {
  CHECK_THROWS_AS(ConvexPolygon({Vec2(0, 0), Vec2(1, 0)}), DomainError);
  CHECK_THROWS_AS(ConvexPolygon({Vec2(0, 0), Vec2(1, 0), Vec2(2, 0)}), DomainError);
  CHECK_THROWS_AS(ConvexPolygon({Vec2(0, 0), Vec2(4, 0), Vec2(1, 1), Vec2(0, 4)}), DomainError);
  ConvexPolygon cw({Vec2(0, 0), Vec2(0, 1), Vec2(1, 1), Vec2(1, 0)});
  CHECK(cw.area() > 0.0);
  CHECK(cw.contains(Vec2(0.5, 0.5)));
  CHECK_THROWS_AS(Workspace(5, 5, {ConvexPolygon({Vec2(4, 4), Vec2(6, 4), Vec2(6, 6)})}), DomainError);
}

TEST_CASE("build_esdf on a centred square") {
  const double res = 0.1;
  auto grid = build_esdf(square_scene(), res);
  // (5, 5) is a cell corner on the SDF ridge, so the interpolation error is
  // exactly res/2 up to rounding.
  CHECK(std::abs(grid.query(Vec2(5, 5)).distance + 1.0) <= res / 2 + 1e-12);
  CHECK(std::abs(grid.query(Vec2(5, 8)).distance - 2.0) <= res / 2);
  CHECK(grid.query(Vec2(5, 8)).normal.y() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("build_esdf cell values match the brute-force oracle") {
  const auto ws = random_scene(11);
  const double res = 0.25;
  auto grid = build_esdf(ws, res);
  const auto polys = polys_of(ws);
  double worst = 0.0;
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) {
      const double exact = oracle::scene_sdf(polys, grid.cell_center(i, j), ws.distance_cap());
      worst = std::max(worst, std::abs(grid.value(i, j) - exact));
      CHECK(std::abs(grid.gradient(i, j).norm() - 1.0) < 1e-6);
    }
  }
  CHECK(worst <= res / 2);
}

TEST_CASE("serial and parallel ESDF kernels agree bitwise") {
  const auto ws = random_scene(5);
  auto a = build_esdf(ws, 0.3, Exec::serial);
  auto b = build_esdf(ws, 0.3, Exec::parallel);
  CHECK(a.values() == b.values());
}

TEST_CASE("empty scene uses the distance cap") {
  Workspace ws(20.0, 10.0);
  auto grid = build_esdf(ws, 0.5);
  CHECK(grid.query(Vec2(3, 3)).distance == doctest::Approx(20.0));
  CHECK(grid.query(Vec2(3, 3)).normal.norm() == doctest::Approx(1.0));
}

TEST_CASE("boundary flag adds wall distances") {
  Workspace ws(20.0, 10.0, {}, true);
  auto grid = build_esdf(ws, 0.5);
  CHECK(std::abs(grid.query(Vec2(10.25, 2.25)).distance - 2.25) < 0.25);
}

TEST_CASE("query_sdf interpolation identities") {
  // 4x4 grid with values increasing by 1 per cell along x.
  std::vector<double> values;
  std::vector<Vec2> grads;
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) {
      values.push_back(1.0 + i);
      grads.emplace_back(1.0, 0.0);
    }
  }
  EsdfGrid grid(1.0, Vec2::Zero(), 4, 4, Vec2(4, 4), values, grads);
  CHECK(grid.query(grid.cell_center(2, 1)).distance == doctest::Approx(3.0));
  CHECK(grid.query(Vec2(1.0, 1.5)).distance == doctest::Approx(1.5));
  CHECK_THROWS_AS(grid.query(Vec2(-0.1, 1.0)), DomainError);
  CHECK_THROWS_AS(grid.query(Vec2(1.0, 4.1)), DomainError);
}

TEST_CASE("query_sdf error vs exact SDF at random free-space points") {
  const auto ws = random_scene(3);
  const double res = 0.25;
  auto grid = build_esdf(ws, res);
  const auto polys = polys_of(ws);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ux(0.0, ws.width()), uy(0.0, ws.height());
  int count = 0;
  double worst = 0.0;
  while (count < 1000) {
    const Vec2 p(ux(rng), uy(rng));
    const double exact = oracle::scene_sdf(polys, p, ws.distance_cap());
    if (exact <= 0.0) continue;
    ++count;
    worst = std::max(worst, std::abs(grid.query(p).distance - exact));
  }
  CHECK(worst <= res);
}

TEST_CASE("SDF sign agrees with point-in-polygon membership") {
  const auto ws = random_scene(8);
  const double res = 0.25;
  auto grid = build_esdf(ws, res);
  const auto polys = polys_of(ws);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(0.0, ws.width()), uy(0.0, ws.height());
  int mismatches = 0;
  for (int s = 0; s < 10000; ++s) {
    const Vec2 p(ux(rng), uy(rng));
    bool in = false;
    double boundary = std::numeric_limits<double>::infinity();
    for (const auto& poly : polys) {
      in = in || oracle::inside(poly, p);
      boundary = std::min(boundary, std::abs(oracle::polygon_sdf(poly, p)));
    }
    if (boundary < res) continue;
    const double d = grid.query(p).distance;
    if ((d < 0.0) != in) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("normals agree with finite differences away from the medial axis") {
  const auto ws = random_scene(21);
  const double res = 0.25;
  auto grid = build_esdf(ws, res);
  const auto polys = polys_of(ws);
  auto exact = [&](const Vec2& p) { return oracle::scene_sdf(polys, p, ws.distance_cap()); };
  auto exact_normal = [&](const Vec2& p) {
    const double h = 1e-6;
    return Vec2(exact(p + Vec2(h, 0)) - exact(p - Vec2(h, 0)), exact(p + Vec2(0, h)) - exact(p - Vec2(0, h)))
        .normalized();
  };
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> ux(1.0, ws.width() - 1.0), uy(1.0, ws.height() - 1.0);
  int checked = 0;
  double worst = 0.0;
  for (int s = 0; s < 20000 && checked < 2000; ++s) {
    const Vec2 p(ux(rng), uy(rng));
    const double d = exact(p);
    if (std::abs(d) <= 2 * res || d >= ws.distance_cap()) continue;
    // Skip points whose interpolation stencil straddles a ridge of the SDF.
    const Vec2 n0 = exact_normal(p);
    bool smooth = true;
    for (int k = 0; k < 8 && smooth; ++k) {
      const double a = k * std::numbers::pi / 4;
      const Vec2 q = p + 1.5 * res * Vec2(std::cos(a), std::sin(a));
      smooth = angle_between(n0, exact_normal(q)) < 10.0;
    }
    if (!smooth) continue;
    const double h = res / 4;
    const Vec2 fd(grid.query(p + Vec2(h, 0)).distance - grid.query(p - Vec2(h, 0)).distance,
                  grid.query(p + Vec2(0, h)).distance - grid.query(p - Vec2(0, h)).distance);
    worst = std::max(worst, angle_between(fd, grid.query(p).normal));
    ++checked;
  }
  CHECK(checked > 500);
  CHECK(worst < 5.0);
}

TEST_CASE("ESDF binary export layout") {
  auto grid = build_esdf(square_scene(), 0.5);
  const auto bytes = encode_esdf(grid);
  REQUIRE(bytes.size() == kEsdfHeaderBytes + static_cast<std::size_t>(grid.nx() * grid.ny()) * 12);
  CHECK(std::string(bytes.data(), 4) == "ESDF");
  auto back = decode_esdf(bytes);
  CHECK(back.nx() == grid.nx());
  CHECK(back.ny() == grid.ny());
  CHECK(back.resolution() == grid.resolution());
  for (std::size_t k = 0; k < grid.values().size(); ++k) {
    CHECK(back.values()[k] == static_cast<float>(grid.values()[k]));
  }
  auto truncated = bytes;
  truncated.resize(100);
  CHECK_THROWS_AS(decode_esdf(truncated), IoError);
}

TEST_CASE("generate_scenario") {
  ScenarioParams p;
  SUBCASE("zero obstacles") {
    p.obstacle_count = 0;
    CHECK(generate_scenario(ScenarioKind::dense_obstacles, 1, p).obstacles().empty());
  }
  SUBCASE("determinism") {
    auto a = generate_scenario(ScenarioKind::dense_obstacles, 7, p);
    auto b = generate_scenario(ScenarioKind::dense_obstacles, 7, p);
    CHECK(a == b);
    CHECK(a.obstacles().size() == 5);
    CHECK(scenario_to_json({a, ScenarioKind::dense_obstacles, 7, p}).dump() ==
          scenario_to_json({b, ScenarioKind::dense_obstacles, 7, p}).dump());
    auto c = generate_scenario(ScenarioKind::dense_obstacles, 8, p);
    CHECK_FALSE(a == c);
  }
  SUBCASE("clearance and keep-out respected") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto ws = generate_scenario(ScenarioKind::dense_obstacles, seed, p);
      for (std::size_t i = 0; i < ws.obstacles().size(); ++i) {
        CHECK(ws.obstacles()[i].min_corner().x() >= p.keepout_fraction * p.width);
        CHECK(ws.obstacles()[i].max_corner().x() <= (1 - p.keepout_fraction) * p.width);
        for (std::size_t j = i + 1; j < ws.obstacles().size(); ++j) {
          CHECK(polygon_distance(ws.obstacles()[i], ws.obstacles()[j]) >= p.min_clearance - 1e-9);
        }
      }
    }
  }
  SUBCASE("narrow passage corridor probe") {
    p.corridor_width = 4.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto ws = generate_scenario(ScenarioKind::narrow_passages, seed, p);
      const auto polys = polys_of(ws);
      auto probe = [&](double y) { return oracle::scene_sdf(polys, Vec2(p.width / 2, y), ws.distance_cap()); };
      double best_y = 0.0;
      for (double y = 0.0; y <= p.height; y += 0.05) {
        if (probe(y) > probe(best_y)) best_y = y;
      }
      // The probe is concave around the corridor centre; refine by ternary search.
      double lo = best_y - 0.05, hi = best_y + 0.05;
      for (int it = 0; it < 100; ++it) {
        const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        if (probe(m1) < probe(m2)) lo = m1; else hi = m2;
      }
      const double best = probe(0.5 * (lo + hi));
      CHECK(best >= 2.0 - 1e-6);
      CHECK(best < 2.0 + 0.05);
    }
  }
  SUBCASE("retry budget exhaustion reports the clearance") {
    p.obstacle_count = 60;
    p.min_clearance = 20.0;
    p.max_attempts = 50;
    try {
      generate_scenario(ScenarioKind::dense_obstacles, 3, p);
      FAIL("expected GenerationError");
    } catch (const GenerationError& e) {
      CHECK(std::string(e.what()).find("clearance") != std::string::npos);
    }
  }
}

TEST_CASE("scenario JSON round trip") {
  ScenarioParams p;
  auto ws = generate_scenario(ScenarioKind::narrow_passages, 4, p);
  Scenario s{ws, ScenarioKind::narrow_passages, 4, p};
  auto j = scenario_to_json(s);
  auto back = scenario_from_json(j);
  CHECK(back.workspace == ws);
  CHECK(back.params == p);
  CHECK(back.kind == ScenarioKind::narrow_passages);
}
