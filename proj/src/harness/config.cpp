#include "swarmdiff/harness/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/hash.hpp"

namespace swarmdiff::harness {

using nlohmann::json;

int SwarmConfig::start_components() const { return n1 > 0 ? n1 : (robots >= 20 ? 3 : 1); }
int SwarmConfig::goal_components() const { return n2 > 0 ? n2 : (robots >= 20 ? 3 : 1); }

prm::DatasetConfig PlannerConfig::dataset_config() const {
  prm::DatasetConfig d;
  d.count = dataset_count;
  d.kind = kind;
  d.scenario = scenario;
  d.prm = prm;
  d.esdf_resolution = esdf_resolution;
  d.horizon = model.horizon;
  d.attempts_per_round = attempts_per_round;
  return d;
}

void PlannerConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](const std::string& section, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.push_back(section + ": " + e.what());
    }
  };
  check("scenario", [&] {
    const auto& p = scenario;
    if (!(p.width > 0.0 && p.height > 0.0)) throw DomainError("width and height must be positive");
    if (p.obstacle_count < 0 || p.min_radius <= 0.0 || p.max_radius < p.min_radius || p.min_vertices < 3 ||
        p.max_vertices < p.min_vertices || p.min_clearance < 0.0) {
      throw DomainError("invalid obstacle parameters");
    }
    if (!(p.keepout_fraction > 0.0 && p.keepout_fraction < 0.5)) throw DomainError("keepout_fraction must lie in (0, 0.5)");
  });
  check("dataset", [&] { dataset_config().validate(); });
  check("model", [&] {
    model.denoiser.validate();
    if (model.diffusion_steps < 1) throw DomainError("diffusion_steps must be >= 1");
    if (model.denoiser.context_dim != diffusion::kContextDim) throw DomainError("context_dim is fixed by the feature layout");
  });
  check("train", [&] { train.validate(); });
  check("macro", [&] { macro.validate(); });
  check("swarm", [&] {
    if (swarm.robots < 1) throw DomainError("robots must be >= 1");
    if (!(swarm.radius > 0.0)) throw DomainError("radius must be positive");
    if (swarm.n1 < 0 || swarm.n2 < 0) throw DomainError("component counts must be nonnegative");
    if (2 * swarm.start_components() > swarm.robots || 2 * swarm.goal_components() > swarm.robots) {
      throw DomainError("each endpoint component needs at least two robots");
    }
    if (!(swarm.spread > 0.0)) throw DomainError("spread must be positive");
  });
  check("sim", [&] { sim.validate(); });
  check("bench", [&] {
    if (bench.repeats < 1) throw DomainError("repeats must be >= 1");
    for (int s : bench.sizes) {
      if (s < 1) throw DomainError("sizes must be positive");
    }
    for (int d : bench.densities) {
      if (d < 0) throw DomainError("densities must be nonnegative");
    }
  });
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

json config_to_json(const PlannerConfig& c) {
  return {{"seed", c.seed},
          {"scenario", {{"kind", env::to_string(c.kind)}, {"params", c.scenario}}},
          {"esdf_resolution", c.esdf_resolution},
          {"prm", c.prm},
          {"dataset", {{"count", c.dataset_count}, {"attempts_per_round", c.attempts_per_round}}},
          {"model",
           {{"denoiser", c.model.denoiser},
            {"diffusion_steps", c.model.diffusion_steps},
            {"horizon", c.model.horizon}}},
          {"train", c.train},
          {"macro", c.macro},
          {"swarm",
           {{"robots", c.swarm.robots},
            {"radius", c.swarm.radius},
            {"n1", c.swarm.n1},
            {"n2", c.swarm.n2},
            {"spread", c.swarm.spread}}},
          {"sim", c.sim},
          {"bench", {{"sizes", c.bench.sizes}, {"densities", c.bench.densities}, {"repeats", c.bench.repeats}}}};
}

PlannerConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  PlannerConfig c;
  std::vector<std::string> errors;
  static const std::set<std::string> known{"seed",  "scenario", "esdf_resolution", "prm",   "dataset", "model",
                                           "train", "macro",    "swarm",           "sim",   "bench"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) errors.push_back("unknown key '" + key + "'");
  }
  auto section = [&](const std::string& name, const std::function<void(const json&)>& fn) {
    if (!j.contains(name)) return;
    try {
      fn(j.at(name));
    } catch (const json::exception& e) {
      errors.push_back(name + ": " + e.what());
    } catch (const Error& e) {
      errors.push_back(name + ": " + e.what());
    }
  };
  section("seed", [&](const json& s) { c.seed = s.get<std::uint64_t>(); });
  section("scenario", [&](const json& s) {
    c.kind = env::scenario_kind_from_string(s.value("kind", env::to_string(c.kind)));
    c.scenario = s.value("params", c.scenario);
  });
  section("esdf_resolution", [&](const json& s) { c.esdf_resolution = s.get<double>(); });
  section("prm", [&](const json& s) { c.prm = s.get<prm::PrmConfig>(); });
  section("dataset", [&](const json& s) {
    c.dataset_count = s.value("count", c.dataset_count);
    c.attempts_per_round = s.value("attempts_per_round", c.attempts_per_round);
  });
  section("model", [&](const json& s) {
    c.model.denoiser = s.value("denoiser", c.model.denoiser);
    c.model.diffusion_steps = s.value("diffusion_steps", c.model.diffusion_steps);
    c.model.horizon = s.value("horizon", c.model.horizon);
  });
  section("train", [&](const json& s) { c.train = s.get<diffusion::TrainConfig>(); });
  section("macro", [&](const json& s) { c.macro = s.get<macro::MacroParams>(); });
  section("swarm", [&](const json& s) {
    c.swarm.robots = s.value("robots", c.swarm.robots);
    c.swarm.radius = s.value("radius", c.swarm.radius);
    c.swarm.n1 = s.value("n1", c.swarm.n1);
    c.swarm.n2 = s.value("n2", c.swarm.n2);
    c.swarm.spread = s.value("spread", c.swarm.spread);
  });
  section("sim", [&](const json& s) { c.sim = s.get<micro::SimConfig>(); });
  section("bench", [&](const json& s) {
    c.bench.sizes = s.value("sizes", c.bench.sizes);
    c.bench.densities = s.value("densities", c.bench.densities);
    c.bench.repeats = s.value("repeats", c.bench.repeats);
  });
  try {
    c.validate();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    const auto nl = what.find('\n');
    std::istringstream rest(nl == std::string::npos ? "" : what.substr(nl + 1));
    for (std::string line; std::getline(rest, line);) errors.push_back(line.substr(line.find("- ") + 2));
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

PlannerConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

namespace {

std::string hash_json(const json& j) { return hex64(fnv1a64(j.dump())); }

}  // namespace

std::string config_hash(const PlannerConfig& c) { return hash_json(config_to_json(c)); }

std::string data_hash(const PlannerConfig& c) {
  const json full = config_to_json(c);
  return hash_json({{"scenario", full["scenario"]},
                    {"esdf_resolution", full["esdf_resolution"]},
                    {"prm", full["prm"]},
                    {"dataset", full["dataset"]},
                    {"horizon", c.model.horizon}});
}

std::string model_hash(const PlannerConfig& c) {
  const json full = config_to_json(c);
  return hash_json({{"data", data_hash(c)}, {"model", full["model"]}, {"train", full["train"]}});
}

}  // namespace swarmdiff::harness
