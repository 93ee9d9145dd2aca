#pragma once

#include <functional>
#include <string>
#include <vector>

#include "swarmdiff/diffusion/model.hpp"
#include "swarmdiff/harness/config.hpp"
#include "swarmdiff/harness/pipeline.hpp"

namespace swarmdiff::harness {

enum class BenchSuite { sizes, densities };

std::string to_string(BenchSuite s);
BenchSuite bench_suite_from_string(const std::string& s);

struct BenchRow {
  std::string suite;
  int cell = 0;
  int value = 0;  ///< robots (sizes) or obstacle count (densities)
  int repeat = 0;
  std::uint64_t seed = 0;
  MetricsReport report;
  std::string error;  ///< empty on a completed run
};

/// Repeat r of every cell uses the scene, robots and sampler seeds derived
/// from (cfg.seed, r), so cells differ only in the swept value. A failing
/// cell becomes a row with success = false and the error message.
std::vector<BenchRow> run_bench(const PlannerConfig& cfg, const diffusion::DiffusionModel& model, BenchSuite suite,
                                const std::function<void(const BenchRow&)>& on_row = {}, Exec exec = Exec::parallel);

/// Fixed column order, see kBenchColumns.
inline constexpr const char* kBenchColumns =
    "suite,cell,value,repeat,seed,robots,components,success,T_sol,T_macro,T_micro,D_bar,D_lower,d_obs,d_rob,steps,"
    "relaxed_steps,hard_stops,error";
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace swarmdiff::harness
