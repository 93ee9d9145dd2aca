#include "swarmdiff/harness/bench.hpp"

#include <cmath>
#include <cstdio>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/rng.hpp"
#include "swarmdiff/env/esdf.hpp"

namespace swarmdiff::harness {

std::string to_string(BenchSuite s) { return s == BenchSuite::sizes ? "sizes" : "densities"; }

BenchSuite bench_suite_from_string(const std::string& s) {
  if (s == "sizes") return BenchSuite::sizes;
  if (s == "densities") return BenchSuite::densities;
  throw ConfigError("unknown bench suite '" + s + "' (expected sizes or densities)");
}

std::vector<BenchRow> run_bench(const PlannerConfig& cfg, const diffusion::DiffusionModel& model, BenchSuite suite,
                                const std::function<void(const BenchRow&)>& on_row, Exec exec) {
  const auto& values = suite == BenchSuite::sizes ? cfg.bench.sizes : cfg.bench.densities;
  std::vector<BenchRow> rows;
  for (std::size_t cell = 0; cell < values.size(); ++cell) {
    for (int r = 0; r < cfg.bench.repeats; ++r) {
      PlannerConfig c = cfg;
      if (suite == BenchSuite::sizes) {
        c.swarm.robots = values[cell];
      } else {
        c.scenario.obstacle_count = values[cell];
      }
      BenchRow row;
      row.suite = to_string(suite);
      row.cell = static_cast<int>(cell);
      row.value = values[cell];
      row.repeat = r;
      row.seed = derive_seed(cfg.seed, streams::kBench, static_cast<std::uint64_t>(r));
      row.report.seed = row.seed;
      row.report.robots = c.swarm.robots;
      row.report.config_hash = config_hash(c);
      try {
        c.validate();
        const auto scenario = make_scenario(c, row.seed);
        const auto grid = env::build_esdf(scenario.workspace, c.esdf_resolution, exec);
        const auto mission = make_mission(c, scenario, grid, row.seed);
        const auto planned = plan_mission(c, model, mission, grid, row.seed, exec);
        const auto run = run_micro(c, planned.plan, mission, grid, row.seed, exec);
        row.report = make_report(run.log, planned.plan.size(), planned.T_macro, run.T_micro, config_hash(c));
      } catch (const Error& e) {
        row.report.success = false;
        row.error = e.what();
      }
      if (on_row) on_row(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

}  // namespace

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string s = std::string(kBenchColumns) + "\n";
  for (const auto& row : rows) {
    const auto& m = row.report;
    const bool ran = row.error.empty();
    s += row.suite + "," + std::to_string(row.cell) + "," + std::to_string(row.value) + "," +
         std::to_string(row.repeat) + "," + std::to_string(row.seed) + "," + std::to_string(m.robots) + "," +
         std::to_string(m.components) + "," + (m.success ? "true" : "false") + "," + (ran ? num(m.T_sol) : "") + "," +
         (ran ? num(m.T_macro) : "") + "," + (ran ? num(m.T_micro) : "") + "," + (ran ? num(m.D_bar) : "") + "," +
         (ran ? num(m.D_lower) : "") + "," + (ran ? num(m.d_obs) : "") + "," + (ran ? num(m.d_rob) : "") + "," +
         std::to_string(m.steps) + "," + std::to_string(m.relaxed_steps) + "," + std::to_string(m.hard_stops) + "," +
         csv_field(row.error) + "\n";
  }
  return s;
}

}  // namespace swarmdiff::harness
