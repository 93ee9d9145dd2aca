#include "swarmdiff/harness/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "swarmdiff/common/binary_io.hpp"
#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/harness/bench.hpp"
#include "swarmdiff/harness/config.hpp"
#include "swarmdiff/harness/pipeline.hpp"
#include "swarmdiff/harness/plot.hpp"

namespace swarmdiff::harness {

namespace {

using nlohmann::json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out;
  std::string dataset;
  std::string model;
  std::string plan;
  std::string log;
  std::string scenario;
  std::string resume;
  std::string suite = "sizes";
  int count = -1;
  int steps = -1;
};

class Context {
 public:
  Context(const Options& o, std::ostream& out, std::ostream& err) : o_(o), out_(out), err_(err) {
    cfg_ = o.config.empty() ? PlannerConfig{} : load_config(o.config);
    if (o.seed) cfg_.seed = *o.seed;
    if (o.count >= 0) cfg_.dataset_count = o.count;
    if (o.steps >= 0) cfg_.train.steps = o.steps;
    cfg_.validate();
    if (o.threads > 0) set_threads(o.threads);
    exec_ = o.threads == 1 ? Exec::serial : Exec::parallel;
  }

  const PlannerConfig& cfg() const { return cfg_; }
  Exec exec() const { return exec_; }
  std::ostream& out() { return out_; }

  void warn(const std::string& msg) { err_ << "warning: " << msg << "\n"; }
  void check_hash(const std::string& what, const std::string& found, const std::string& expected) {
    if (found != expected) warn(what + " was produced with config hash " + found + ", current config gives " + expected);
  }
  const std::string& require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError("missing required option " + flag);
    return value;
  }

 private:
  const Options& o_;
  std::ostream& out_;
  std::ostream& err_;
  PlannerConfig cfg_;
  Exec exec_ = Exec::parallel;
};

env::Scenario load_scenario(Context& ctx, const std::string& path) {
  if (path.empty()) return make_scenario(ctx.cfg(), ctx.cfg().seed);
  const auto bytes = binio::read_file(path);
  try {
    return env::scenario_from_json(json::parse(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    throw IoError("scenario '" + path + "': " + e.what());
  }
}

json timing_sidecar(const std::string& path) {
  if (!std::filesystem::exists(path)) return json::object();
  const auto bytes = binio::read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception&) {
    return json::object();
  }
}

void cmd_scenario(Context& ctx, const Options& o) {
  const auto s = make_scenario(ctx.cfg(), ctx.cfg().seed);
  binio::write_text(ctx.require(o.out, "--out"), env::scenario_to_json(s).dump() + "\n");
  ctx.out() << "scenario with " << s.workspace.obstacles().size() << " obstacles written to " << o.out << "\n";
}

void cmd_gen_data(Context& ctx, const Options& o) {
  const auto& out = ctx.require(o.out, "--out");
  prm::DatasetStats stats;
  const auto d = prm::build_dataset(ctx.cfg().dataset_config(), ctx.cfg().seed, data_hash(ctx.cfg()), &stats, ctx.exec());
  prm::write_dataset(out, d);
  ctx.out() << "records: " << d.records.size() << "\nattempts: " << stats.attempts << "\nfailures: " << stats.failures
            << "\n";
  for (const auto& [reason, n] : stats.failure_reasons) ctx.out() << "  " << reason << ": " << n << "\n";
}

void cmd_validate(Context& ctx, const Options& o) {
  const auto d = prm::read_dataset(ctx.require(o.dataset, "--dataset"));
  ctx.check_hash("dataset", d.config_hash, data_hash(ctx.cfg()));
  const auto report = prm::validate_dataset(d, ctx.exec());
  ctx.out() << "records: " << report.records << "\nfailures: " << report.failures << "\n";
  for (const auto& m : report.messages) ctx.out() << "  " << m << "\n";
  if (!report.ok()) throw GenerationError("dataset failed validation");
}

void cmd_train(Context& ctx, const Options& o) {
  const auto& out = ctx.require(o.out, "--out");
  const auto d = prm::read_dataset(ctx.require(o.dataset, "--dataset"));
  ctx.check_hash("dataset", d.config_hash, data_hash(ctx.cfg()));
  std::optional<diffusion::DiffusionModel> resume;
  if (!o.resume.empty()) resume = diffusion::read_checkpoint(o.resume);
  const auto t = train_model(ctx.cfg(), d, resume ? &*resume : nullptr, {}, ctx.exec());
  diffusion::write_checkpoint(out, t.model);
  binio::write_text(out + ".loss.csv", loss_curve_csv(t.losses, t.first_step));
  if (!t.losses.empty()) {
    ctx.out() << "steps: " << t.first_step << " -> " << t.model.step << "\nloss (moving average): "
              << diffusion::moving_average(t.losses, 0) << " -> "
              << diffusion::moving_average(t.losses, t.losses.size() - 1) << "\n";
  }
  if (t.diverged) {
    throw NumericError("training diverged (" + t.message + "); last finite parameters written to " + out);
  }
}

void cmd_plan(Context& ctx, const Options& o) {
  const auto& out = ctx.require(o.out, "--out");
  const double t0 = now_seconds();
  const auto model = diffusion::read_checkpoint(ctx.require(o.model, "--model"));
  const double load = now_seconds() - t0;
  ctx.check_hash("model", model.config_hash, model_hash(ctx.cfg()));
  const auto scenario = load_scenario(ctx, o.scenario);
  const auto grid = env::build_esdf(scenario.workspace, ctx.cfg().esdf_resolution, ctx.exec());
  const auto mission = make_mission(ctx.cfg(), scenario, grid, ctx.cfg().seed);
  const auto planned = plan_mission(ctx.cfg(), model, mission, grid, ctx.cfg().seed, ctx.exec());
  write_plan_file(out, planned.plan, mission);
  const json timing{{"T_macro", planned.T_macro}, {"model_load", load}};
  binio::write_text(out + ".timing.json", timing.dump() + "\n");
  ctx.out() << "trajectories: " << planned.plan.size() << "\n" << timing.dump(2) << "\n";
}

void cmd_simulate(Context& ctx, const Options& o) {
  const auto& out = ctx.require(o.out, "--out");
  const auto& plan_path = ctx.require(o.plan, "--plan");
  const auto [plan, mission] = read_plan_file(plan_path);
  ctx.check_hash("plan", plan.config_hash, config_hash(ctx.cfg()));
  const auto grid = env::build_esdf(mission.scenario.workspace, ctx.cfg().esdf_resolution, ctx.exec());
  const auto run = run_micro(ctx.cfg(), plan, mission, grid, ctx.cfg().seed, ctx.exec());
  micro::write_log(out, run.log);
  const json timing = timing_sidecar(plan_path + ".timing.json");
  auto report = make_report(run.log, plan.size(), timing.value("T_macro", 0.0), run.T_micro, config_hash(ctx.cfg()));
  report.model_load = timing.value("model_load", 0.0);
  const json j = report_to_json(report);
  binio::write_text(out + ".metrics.json", j.dump(2) + "\n");
  ctx.out() << j.dump(2) << "\n";
  if (!report.success) throw PlanningError("swarm did not reach the goal distribution within the step budget");
}

void cmd_metrics(Context& ctx, const Options& o) {
  const auto& path = ctx.require(o.log, "--log");
  const auto log = micro::read_log(path);
  const auto m = micro::reduce_log(log);
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j{{"D_bar", m.D_bar},   {"d_obs", finite(m.d_obs)}, {"d_rob", finite(m.d_rob)},
         {"success", m.success}, {"steps", m.steps},        {"D_lower", straight_line_bound(log)},
         {"seed", log.seed},     {"config_hash", log.config_hash}};
  const json side = timing_sidecar(path + ".metrics.json");
  for (const char* key : {"T_macro", "T_micro", "T_sol"}) {
    if (side.contains(key)) j[key] = side[key];
  }
  ctx.out() << j.dump(2) << "\n";
}

void cmd_plot(Context& ctx, const Options& o) {
  const auto& out = ctx.require(o.out, "--out");
  std::optional<std::pair<macro::GmmTrajectory, Mission>> pm;
  if (!o.plan.empty()) {
    const auto bytes = binio::read_file(o.plan);
    json head;
    try {
      head = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception&) {
      throw ConfigError("'" + o.plan + "' is not a plan file");
    }
    if (!head.is_object() || head.value("format", "") != "swarmdiff-plan") {
      throw ConfigError("'" + o.plan + "' is not a plan file");
    }
    pm = read_plan_file(o.plan);
  }
  std::optional<micro::SwarmLog> log;
  if (!o.log.empty()) log = micro::read_log(o.log);
  env::Workspace ws = pm ? pm->second.scenario.workspace : load_scenario(ctx, o.scenario).workspace;
  binio::write_text(out, render_svg(ws, pm ? &pm->first : nullptr, log ? &*log : nullptr));
  ctx.out() << "wrote " << out << "\n";
}

void cmd_bench(Context& ctx, const Options& o) {
  const auto& out = ctx.require(o.out, "--out");
  const auto suite = bench_suite_from_string(o.suite);
  const auto model = diffusion::read_checkpoint(ctx.require(o.model, "--model"));
  ctx.check_hash("model", model.config_hash, model_hash(ctx.cfg()));
  const auto rows = run_bench(ctx.cfg(), model, suite,
                              [&](const BenchRow& r) {
                                ctx.out() << r.suite << " value=" << r.value << " repeat=" << r.repeat
                                          << " success=" << (r.report.success ? "true" : "false");
                                if (!r.error.empty()) ctx.out() << " error=" << r.error;
                                ctx.out() << "\n";
                              },
                              ctx.exec());
  binio::write_text(out, bench_csv(rows));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Swarm motion planning with a diffusion prior over Gaussian trajectories", "swarmdiff"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "planner config JSON");
  app.add_option("--seed", o.seed, "root seed (overrides the config)");
  app.add_option("--threads", o.threads, "OpenMP threads; 1 selects the serial kernels");
  app.add_option("--out", o.out, "output path");
  app.fallthrough();

  auto* scenario = app.add_subcommand("scenario", "write the procedural scene for the seed");
  auto* gen = app.add_subcommand("gen-data", "build a PRM training dataset");
  gen->add_option("--count", o.count, "records (overrides the config)");
  auto* val = app.add_subcommand("validate-dataset", "recheck every record of a dataset");
  val->add_option("--dataset", o.dataset)->required();
  auto* tr = app.add_subcommand("train", "train the denoiser");
  tr->add_option("--dataset", o.dataset)->required();
  tr->add_option("--resume", o.resume, "checkpoint to continue from");
  tr->add_option("--steps", o.steps, "training steps (overrides the config)");
  auto* plan = app.add_subcommand("plan", "plan the macroscopic GMM trajectory");
  plan->add_option("--model", o.model)->required();
  plan->add_option("--scenario", o.scenario, "scene JSON (default: generated from the seed)");
  auto* sim = app.add_subcommand("simulate", "run the swarm controllers along a plan");
  sim->add_option("--plan", o.plan)->required();
  auto* plot = app.add_subcommand("plot", "render a plan and/or log to SVG");
  plot->add_option("--plan", o.plan);
  plot->add_option("--log", o.log);
  plot->add_option("--scenario", o.scenario);
  auto* bench = app.add_subcommand("bench", "run a benchmark suite to CSV");
  bench->add_option("--model", o.model)->required();
  bench->add_option("--suite", o.suite, "sizes or densities")->check(CLI::IsMember({"sizes", "densities"}));
  auto* metrics = app.add_subcommand("metrics", "reduce a log to metrics");
  metrics->add_option("--log", o.log)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    Context ctx(o, out, err);
    if (*scenario) cmd_scenario(ctx, o);
    if (*gen) cmd_gen_data(ctx, o);
    if (*val) cmd_validate(ctx, o);
    if (*tr) cmd_train(ctx, o);
    if (*plan) cmd_plan(ctx, o);
    if (*sim) cmd_simulate(ctx, o);
    if (*plot) cmd_plot(ctx, o);
    if (*bench) cmd_bench(ctx, o);
    if (*metrics) cmd_metrics(ctx, o);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitPlanning;
  }
  return kExitOk;
}

}  // namespace swarmdiff::harness
