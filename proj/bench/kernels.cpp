// Serial reference vs OpenMP kernels: wall time of each and a bitwise
// comparison of their outputs. Exit status 1 when any pair differs.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/costs/costs.hpp"
#include "swarmdiff/diffusion/train.hpp"
#include "swarmdiff/env/esdf.hpp"
#include "swarmdiff/env/scenario.hpp"
#include "swarmdiff/harness/config.hpp"
#include "swarmdiff/prm/dataset.hpp"

using namespace swarmdiff;

namespace {

template <typename F>
double best_of(int repeats, F&& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

struct Case {
  std::string name;
  std::function<std::vector<char>(Exec)> run;  ///< output bytes for comparison
};

template <typename T>
void append(std::vector<char>& out, const T* data, std::size_t n) {
  const auto* p = reinterpret_cast<const char*>(data);
  out.insert(out.end(), p, p + n * sizeof(T));
}

costs::GaussianTrajectory random_trajectory(std::mt19937_64& rng, int h) {
  std::uniform_real_distribution<double> px(5, 95), py(5, 75), sig(0.3, 1.5), cor(-0.8, 0.8), step(-1, 1);
  costs::GaussianTrajectory t;
  t.dt = 1.0;
  gauss::GaussianState s{px(rng), py(rng), sig(rng), sig(rng), cor(rng)};
  for (int i = 0; i < h; ++i) {
    t.states.push_back(s);
    s.x = std::clamp(s.x + step(rng), 1.0, 99.0);
    s.y = std::clamp(s.y + step(rng), 1.0, 79.0);
  }
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs parallel kernel benchmark"};
  int repeats = 3;
  bool quick = false;
  app.add_option("--repeats", repeats, "timed runs per kernel (best is reported)")->check(CLI::PositiveNumber);
  app.add_flag("--quick", quick, "small inputs, for a smoke test");
  CLI11_PARSE(app, argc, argv);

  const harness::PlannerConfig cfg;
  const auto ws = env::generate_scenario(cfg.kind, 11, cfg.scenario);
  const double res = quick ? 0.5 : 0.1;
  const auto grid = env::build_esdf(ws, cfg.esdf_resolution);
  const auto gp = costs::GpModel::constant_velocity(1.0, 1.0, 0.5);

  std::mt19937_64 rng(11);
  std::vector<costs::GaussianTrajectory> trajs;
  for (int k = 0; k < (quick ? 32 : 512); ++k) trajs.push_back(random_trajectory(rng, 64));

  const diffusion::DenoiserConfig arch = cfg.model.denoiser;
  const auto params = diffusion::Denoiser<float>::initial_parameters(arch, 5);
  const diffusion::Denoiser<float> net(arch, params);
  std::vector<diffusion::TrainingExample> examples;
  std::normal_distribution<double> n01;
  for (int k = 0; k < 64; ++k) {
    diffusion::TrainingExample ex;
    ex.z = diffusion::NodeArray(64, 5);
    for (Eigen::Index i = 0; i < ex.z.size(); ++i) ex.z.data()[i] = n01(rng);
    ex.context = Eigen::VectorXd(arch.context_dim);
    for (Eigen::Index i = 0; i < ex.context.size(); ++i) ex.context[i] = n01(rng);
    examples.push_back(std::move(ex));
  }
  const auto schedule = diffusion::NoiseSchedule::cosine(cfg.model.diffusion_steps);
  std::vector<diffusion::Denoiser<float>::Input> inputs;
  std::vector<diffusion::Denoiser<float>::Mat> targets;
  diffusion::make_batch<float>(examples, schedule, 3, 0, quick ? 8 : 64, inputs, targets);

  auto dcfg = cfg.dataset_config();
  dcfg.count = quick ? 2 : 16;

  const std::vector<Case> cases{
      {"build_esdf",
       [&](Exec e) {
         const auto g = env::build_esdf(ws, res, e);
         std::vector<char> out;
         append(out, g.values().data(), g.values().size());
         return out;
       }},
      {"batch_costs",
       [&](Exec e) {
         const auto c = costs::batch_costs(trajs, grid, cfg.macro.weights, gp, e);
         std::vector<char> out;
         for (const auto& b : c) append(out, &b.total, 1);
         return out;
       }},
      {"batch_gradients",
       [&](Exec e) {
         const auto gs = costs::batch_gradients(trajs, grid, cfg.macro.weights, gp, e);
         std::vector<char> out;
         for (const auto& g : gs) append(out, g.data()->data(), 5 * g.size());
         return out;
       }},
      {"loss_and_gradient",
       [&](Exec e) {
         std::vector<float> grad;
         const double loss = diffusion::loss_and_gradient<float>(net, inputs, targets, cfg.train.loss,
                                                                 cfg.train.sw_projections, 7, &grad, e);
         std::vector<char> out;
         append(out, &loss, 1);
         append(out, grad.data(), grad.size());
         return out;
       }},
      {"build_dataset",
       [&](Exec e) { return prm::encode_dataset(prm::build_dataset(dcfg, 3, "", nullptr, e)); }},
  };

  std::printf("threads %d, best of %d\n", max_threads(), repeats);
  std::printf("%-18s %12s %12s %8s %s\n", "kernel", "serial [ms]", "parallel [ms]", "speedup", "outputs");
  int mismatches = 0;
  for (const auto& c : cases) {
    std::vector<char> serial, parallel;
    const double ts = best_of(repeats, [&] { serial = c.run(Exec::serial); });
    const double tp = best_of(repeats, [&] { parallel = c.run(Exec::parallel); });
    const bool same = serial == parallel;
    mismatches += same ? 0 : 1;
    std::printf("%-18s %12.2f %12.2f %8.2f %s\n", c.name.c_str(), 1e3 * ts, 1e3 * tp, ts / tp,
                same ? "identical" : "DIFFER");
  }
  return mismatches == 0 ? 0 : 1;
}
