#include "swarmdiff/prm/dataset.hpp"

#include <algorithm>
#include <deque>
#include <variant>

#include "swarmdiff/common/binary_io.hpp"
#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/parallel.hpp"
#include "swarmdiff/common/rng.hpp"
#include "swarmdiff/diffusion/context.hpp"

namespace swarmdiff::prm {
namespace {

constexpr int kWindow = 100;
constexpr int kMaxFailuresInWindow = 90;

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

GaussianState round_f32(const GaussianState& s) {
  return {f32(s.x), f32(s.y), f32(s.sigma_x), f32(s.sigma_y), f32(s.rho)};
}

struct Scene {
  env::Workspace ws;
  env::EsdfGrid grid;
};

Scene make_scene(const DatasetConfig& cfg, std::uint64_t scene_seed) {
  auto ws = env::generate_scenario(cfg.kind, scene_seed, cfg.scenario);
  auto grid = env::build_esdf(ws, cfg.esdf_resolution, Exec::serial);
  return {std::move(ws), std::move(grid)};
}

Eigen::VectorXd rounded_features(const GaussianTrajectory& t, const env::EsdfGrid& grid) {
  Eigen::VectorXd f = diffusion::esdf_features(t.states.front().mean(), t.states.back().mean(), grid);
  for (auto& v : f) v = f32(v);
  return f;
}

std::string recheck(const DatasetConfig& cfg, const DatasetRecord& r, const env::EsdfGrid& grid) {
  const auto& s = r.trajectory.states;
  if (static_cast<int>(s.size()) != cfg.prm.path_nodes) return "wrong node count";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s[i].valid()) return "invalid state at node " + std::to_string(i);
  }
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!connect_edge(s[i - 1], s[i], grid, cfg.prm.alpha, cfg.prm.epsilon,
                      edge_intervals(s[i - 1], s[i], cfg.prm.edge_step))) {
      return "edge " + std::to_string(i - 1) + "-" + std::to_string(i) + " fails the risk recheck";
    }
  }
  if (r.features.size() != diffusion::kEsdfFeatureDim) return "wrong feature count";
  const auto f = rounded_features(r.trajectory, grid);
  if ((f - r.features).cwiseAbs().maxCoeff() > 1e-6) return "stored features do not match the scene";
  return {};
}

}  // namespace

void DatasetConfig::validate() const {
  if (count < 1) throw DomainError("dataset count must be >= 1");
  prm.validate();
  if (!(esdf_resolution > 0.0 && esdf_resolution <= std::min(scenario.width, scenario.height) / 4.0)) {
    throw DomainError("esdf_resolution must lie in (0, min(width, height) / 4]");
  }
  if (horizon < 2 || horizon > prm.path_nodes) throw DomainError("dataset horizon must lie in [2, path_nodes]");
  if (attempts_per_round < 1) throw DomainError("attempts_per_round must be >= 1");
  const auto s = start_region(scenario, prm.bounds);
  const auto g = goal_region(scenario, prm.bounds);
  if (s.hi.x() < s.lo.x() || s.hi.y() < s.lo.y() || g.hi.x() < g.lo.x()) {
    throw DomainError("keepout strips are too narrow for the sigma bounds");
  }
}

void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"count", c.count},
       {"kind", env::to_string(c.kind)},
       {"scenario", c.scenario},
       {"prm", c.prm},
       {"esdf_resolution", c.esdf_resolution},
       {"horizon", c.horizon},
       {"attempts_per_round", c.attempts_per_round}};
}

void from_json(const nlohmann::json& j, DatasetConfig& c) {
  const DatasetConfig d;
  c.count = j.value("count", d.count);
  c.kind = env::scenario_kind_from_string(j.value("kind", env::to_string(d.kind)));
  c.scenario = j.value("scenario", d.scenario);
  c.prm = j.value("prm", d.prm);
  c.esdf_resolution = j.value("esdf_resolution", d.esdf_resolution);
  c.horizon = j.value("horizon", d.horizon);
  c.attempts_per_round = j.value("attempts_per_round", d.attempts_per_round);
}

Box start_region(const env::ScenarioParams& p, const SigmaBounds& b) {
  const double m = 3.0 * b.sigma_max;
  return {Vec2(m, m), Vec2(p.keepout_fraction * p.width, p.height - m)};
}

Box goal_region(const env::ScenarioParams& p, const SigmaBounds& b) {
  const double m = 3.0 * b.sigma_max;
  return {Vec2((1.0 - p.keepout_fraction) * p.width, m), Vec2(p.width - m, p.height - m)};
}

std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t attempt) {
  return derive_seed(seed, streams::kDataset, attempt);
}

DatasetRecord plan_record(const DatasetConfig& cfg, std::uint64_t seed) {
  const auto scene = make_scene(cfg, seed);
  const std::string label = "scene " + std::to_string(seed);
  const auto sbox = start_region(cfg.scenario, cfg.prm.bounds);
  const auto gbox = goal_region(cfg.scenario, cfg.prm.bounds);
  const auto start = round_f32(
      sample_gaussian_node(scene.ws, scene.grid, cfg.prm, derive_seed(seed, streams::kGoal, 0), &sbox, label));
  const auto goal = round_f32(
      sample_gaussian_node(scene.ws, scene.grid, cfg.prm, derive_seed(seed, streams::kGoal, 1), &gbox, label));

  DatasetRecord r;
  r.scene_seed = seed;
  r.trajectory = plan_roadmap_path(scene.ws, scene.grid, start, goal, cfg.prm, derive_seed(seed, streams::kPrm));
  for (auto& s : r.trajectory.states) s = round_f32(s);
  r.features = rounded_features(r.trajectory, scene.grid);
  // Rounding can nudge a node over the risk threshold; the stored record
  // must pass the same recheck validate_dataset applies.
  if (const auto why = recheck(cfg, r, scene.grid); !why.empty()) throw PlanningError("f32 recheck: " + why);
  return r;
}

Dataset build_dataset(const DatasetConfig& cfg, std::uint64_t seed, const std::string& config_hash,
                      DatasetStats* stats, Exec exec) {
  cfg.validate();
  Dataset d;
  d.config = cfg;
  d.seed = seed;
  d.config_hash = config_hash;
  DatasetStats st;
  std::deque<bool> window;
  int window_failures = 0;

  std::uint64_t next = 0;
  while (static_cast<int>(d.records.size()) < cfg.count) {
    const int round = cfg.attempts_per_round;
    std::vector<std::variant<DatasetRecord, std::string>> out(static_cast<std::size_t>(round));
    parallel_for(round, exec, [&](std::ptrdiff_t i) {
      const auto s = scene_seed(seed, next + static_cast<std::uint64_t>(i));
      try {
        out[i] = plan_record(cfg, s);
      } catch (const GenerationError&) {
        out[i] = std::string("scenario generation");
      } catch (const SamplingError&) {
        out[i] = std::string("endpoint sampling");
      } catch (const PlanningError& e) {
        const std::string what = e.what();
        out[i] = what.rfind("f32 recheck", 0) == 0 ? std::string("f32 recheck") : std::string("no path");
      }
    });
    for (int i = 0; i < round && static_cast<int>(d.records.size()) < cfg.count; ++i) {
      ++st.attempts;
      const bool failed = std::holds_alternative<std::string>(out[i]);
      if (failed) {
        ++st.failures;
        ++st.failure_reasons[std::get<std::string>(out[i])];
      } else {
        d.records.push_back(std::move(std::get<DatasetRecord>(out[i])));
      }
      window.push_back(failed);
      window_failures += failed ? 1 : 0;
      if (static_cast<int>(window.size()) > kWindow) {
        window_failures -= window.front() ? 1 : 0;
        window.pop_front();
      }
      if (static_cast<int>(window.size()) == kWindow && window_failures > kMaxFailuresInWindow) {
        std::string diag;
        for (const auto& [why, n] : st.failure_reasons) diag += " " + why + "=" + std::to_string(n);
        if (stats != nullptr) *stats = st;
        throw GenerationError("dataset generation aborted: " + std::to_string(window_failures) +
                              " of the last 100 attempts failed after " + std::to_string(st.attempts) +
                              " attempts and " + std::to_string(d.records.size()) + " records; failures:" + diag);
      }
    }
    next += static_cast<std::uint64_t>(round);
  }
  if (stats != nullptr) *stats = st;
  return d;
}

std::vector<char> encode_dataset(const Dataset& d) {
  const int nodes = d.config.prm.path_nodes;
  const std::size_t record_bytes = 8 + 4 * (static_cast<std::size_t>(nodes) * 5 + diffusion::kEsdfFeatureDim);
  const nlohmann::json header = {{"format", "swarmdiff-dataset"},
                                 {"version", kDatasetVersion},
                                 {"seed", d.seed},
                                 {"config", d.config},
                                 {"config_hash", d.config_hash},
                                 {"count", d.records.size()},
                                 {"nodes", nodes},
                                 {"feature_dim", diffusion::kEsdfFeatureDim},
                                 {"horizon", d.config.horizon},
                                 {"record_bytes", record_bytes}};
  binio::Writer w;
  w.put_raw(header.dump());
  w.put_raw("\n");
  for (const auto& r : d.records) {
    if (static_cast<int>(r.trajectory.size()) != nodes || r.features.size() != diffusion::kEsdfFeatureDim) {
      throw DomainError("dataset record does not match the header shape");
    }
    w.put<std::uint64_t>(r.scene_seed);
    for (const auto& s : r.trajectory.states) {
      for (double v : {s.x, s.y, s.sigma_x, s.sigma_y, s.rho}) w.put<float>(static_cast<float>(v));
    }
    for (double v : r.features) w.put<float>(static_cast<float>(v));
  }
  return w.release();
}

Dataset decode_dataset(const std::vector<char>& bytes) {
  const auto head = binio::parse_header_line(bytes);
  const auto& h = head.header;
  if (h.value("format", "") != "swarmdiff-dataset") throw IoError("not a swarmdiff dataset (byte offset 0)");
  if (h.value("version", 0) != kDatasetVersion) throw IoError("unsupported dataset version");
  Dataset d;
  std::size_t count = 0;
  int nodes = 0;
  try {
    d.seed = h.at("seed").get<std::uint64_t>();
    d.config = h.at("config").get<DatasetConfig>();
    d.config_hash = h.at("config_hash").get<std::string>();
    count = h.at("count").get<std::size_t>();
    nodes = h.at("nodes").get<int>();
    if (h.at("feature_dim").get<int>() != diffusion::kEsdfFeatureDim) throw IoError("dataset feature_dim mismatch");
    d.config.horizon = h.at("horizon").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("dataset header field error: ") + e.what());
  }
  if (nodes != d.config.prm.path_nodes) throw IoError("dataset nodes disagree with the prm config");
  binio::Reader r(std::span<const char>(bytes).subspan(head.payload_offset), head.payload_offset);
  d.records.resize(count);
  std::vector<float> buf(static_cast<std::size_t>(nodes) * 5 + diffusion::kEsdfFeatureDim);
  for (auto& rec : d.records) {
    rec.scene_seed = r.get<std::uint64_t>();
    r.get_all(std::span<float>(buf));
    rec.trajectory.dt = 1.0;
    rec.trajectory.states.resize(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i) {
      const float* p = buf.data() + 5 * i;
      rec.trajectory.states[i] = {p[0], p[1], p[2], p[3], p[4]};
    }
    rec.features.resize(diffusion::kEsdfFeatureDim);
    for (int i = 0; i < diffusion::kEsdfFeatureDim; ++i) rec.features[i] = buf[5 * nodes + i];
  }
  if (r.remaining() != 0) {
    throw IoError("trailing bytes after dataset records at byte offset " + std::to_string(r.offset()));
  }
  return d;
}

void write_dataset(const std::string& path, const Dataset& d) { binio::write_file(path, encode_dataset(d)); }

Dataset read_dataset(const std::string& path) { return decode_dataset(binio::read_file(path)); }

ValidationReport validate_dataset(const Dataset& d, Exec exec) {
  const auto n = static_cast<std::ptrdiff_t>(d.records.size());
  std::vector<std::string> why(d.records.size());
  parallel_for(n, exec, [&](std::ptrdiff_t i) {
    const auto& r = d.records[i];
    try {
      const auto scene = make_scene(d.config, r.scene_seed);
      why[i] = recheck(d.config, r, scene.grid);
    } catch (const Error& e) {
      why[i] = std::string("scene rebuild failed: ") + e.what();
    }
  });
  ValidationReport rep;
  rep.records = static_cast<int>(n);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (why[i].empty()) continue;
    ++rep.failures;
    rep.messages.push_back("record " + std::to_string(i) + ": " + why[i]);
  }
  return rep;
}

std::vector<GaussianTrajectory> training_trajectories(const Dataset& d) {
  std::vector<GaussianTrajectory> out;
  out.reserve(d.records.size());
  for (const auto& r : d.records) out.push_back(subsample(r.trajectory, d.config.horizon));
  return out;
}

std::vector<diffusion::TrainingExample> training_examples(const Dataset& d, const diffusion::Normalizer& n) {
  std::vector<diffusion::TrainingExample> out;
  out.reserve(d.records.size());
  for (const auto& r : d.records) {
    const auto t = subsample(r.trajectory, d.config.horizon);
    out.push_back({n.normalize(t), diffusion::context_vector(t.states.front(), t.states.back(), r.features, n)});
  }
  return out;
}

}  // namespace swarmdiff::prm
