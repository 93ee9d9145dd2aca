#include "swarmdiff/diffusion/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/parallel.hpp"
#include "swarmdiff/common/rng.hpp"

namespace swarmdiff::diffusion {

std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "sliced-wasserstein"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "sliced-wasserstein") return LossKind::sliced_wasserstein;
  throw ConfigError("unknown loss kind '" + s + "' (expected mse or sliced-wasserstein)");
}

void TrainConfig::validate() const {
  if (steps < 0) throw DomainError("train.steps must be nonnegative");
  if (batch_size < 1) throw DomainError("train.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw DomainError("train.learning_rate must be positive");
  if (grad_clip < 0.0) throw DomainError("train.grad_clip must be nonnegative");
  if (sw_projections < 1) throw DomainError("train.sw_projections must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"steps", c.steps},          {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                     {"loss", to_string(c.loss)}, {"seed", c.seed},             {"grad_clip", c.grad_clip},
                     {"sw_projections", c.sw_projections}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.loss = loss_kind_from_string(j.value("loss", to_string(d.loss)));
  c.seed = j.value("seed", d.seed);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.sw_projections = j.value("sw_projections", d.sw_projections);
}

template <typename Scalar>
double batch_loss(const std::vector<typename Denoiser<Scalar>::Mat>& pred,
                  const std::vector<typename Denoiser<Scalar>::Mat>& target, LossKind kind, int projections,
                  std::uint64_t projection_seed, std::vector<typename Denoiser<Scalar>::Mat>* d_pred) {
  using Mat = typename Denoiser<Scalar>::Mat;
  const std::size_t b = pred.size();
  if (b == 0 || target.size() != b) throw DomainError("loss needs matching non-empty batches");
  if (d_pred) d_pred->assign(b, Mat());
  double total = 0.0;
  if (kind == LossKind::mse) {
    const double n = static_cast<double>(b) * static_cast<double>(pred[0].size());
    for (std::size_t i = 0; i < b; ++i) {
      const Mat diff = pred[i] - target[i];
      total += static_cast<double>(diff.squaredNorm());
      if (d_pred) (*d_pred)[i] = diff * static_cast<Scalar>(2.0 / n);
    }
    return total / n;
  }

  std::mt19937_64 rng(projection_seed);
  std::normal_distribution<double> normal;
  std::vector<Eigen::Matrix<Scalar, 5, 1>> dirs(static_cast<std::size_t>(projections));
  for (auto& dvec : dirs) {
    Vec5 v;
    for (int c = 0; c < 5; ++c) v[c] = normal(rng);
    dvec = (v / v.norm()).cast<Scalar>();
  }
  const Eigen::Index h = pred[0].rows();
  const double norm = static_cast<double>(b) * projections * static_cast<double>(h);
  std::vector<Eigen::Index> ia(static_cast<std::size_t>(h)), ib(static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < b; ++i) {
    if (d_pred) (*d_pred)[i] = Mat::Zero(h, 5);
    for (const auto& dir : dirs) {
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a = pred[i] * dir, t = target[i] * dir;
      std::iota(ia.begin(), ia.end(), 0);
      std::iota(ib.begin(), ib.end(), 0);
      std::stable_sort(ia.begin(), ia.end(), [&](auto x, auto y) { return a[x] < a[y]; });
      std::stable_sort(ib.begin(), ib.end(), [&](auto x, auto y) { return t[x] < t[y]; });
      for (Eigen::Index k = 0; k < h; ++k) {
        const double diff = static_cast<double>(a[ia[k]] - t[ib[k]]);
        total += diff * diff;
        if (d_pred) (*d_pred)[i].row(ia[k]) += static_cast<Scalar>(2.0 * diff / norm) * dir.transpose();
      }
    }
  }
  return total / norm;
}

template <typename Scalar>
void make_batch(std::span<const TrainingExample> data, const NoiseSchedule& schedule, std::uint64_t seed,
                std::uint64_t step, int batch_size, std::vector<typename Denoiser<Scalar>::Input>& inputs,
                std::vector<typename Denoiser<Scalar>::Mat>& targets) {
  if (data.empty()) throw DomainError("training dataset is empty");
  inputs.resize(static_cast<std::size_t>(batch_size));
  targets.resize(static_cast<std::size_t>(batch_size));
  auto rng = make_rng(seed, streams::kTrain, step);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> tpick(1, schedule.steps());
  for (int i = 0; i < batch_size; ++i) {
    const auto& ex = data[pick(rng)];
    const int t = tpick(rng);
    const auto noised = forward_diffuse(ex.z, t, schedule, rng());
    auto& in = inputs[static_cast<std::size_t>(i)];
    in.x = noised.noisy.cast<Scalar>();
    in.t = t;
    in.context = ex.context.transpose().cast<Scalar>();
    in.positions.clear();
    targets[static_cast<std::size_t>(i)] = noised.eps.cast<Scalar>();
  }
}

template <typename Scalar>
double loss_and_gradient(const Denoiser<Scalar>& net, const std::vector<typename Denoiser<Scalar>::Input>& inputs,
                         const std::vector<typename Denoiser<Scalar>::Mat>& targets, LossKind kind, int projections,
                         std::uint64_t projection_seed, std::vector<Scalar>* grad, Exec exec) {
  using Mat = typename Denoiser<Scalar>::Mat;
  using Cache = typename Denoiser<Scalar>::Cache;
  const auto b = static_cast<std::ptrdiff_t>(inputs.size());
  std::vector<Mat> pred(inputs.size());
  std::vector<Cache> caches(grad ? inputs.size() : 0);
  parallel_for(b, exec, [&](std::ptrdiff_t i) { pred[i] = net.forward(inputs[i], grad ? &caches[i] : nullptr); });
  std::vector<Mat> d_pred;
  const double loss = batch_loss<Scalar>(pred, targets, kind, projections, projection_seed, grad ? &d_pred : nullptr);
  if (!grad) return loss;

  const std::size_t n = net.parameters().size();
  std::vector<AlignedVector<Scalar>> partial(inputs.size(), AlignedVector<Scalar>(n, Scalar(0)));
  parallel_for(b, exec, [&](std::ptrdiff_t i) { net.backward(caches[i], d_pred[i], partial[i]); });
  grad->assign(n, Scalar(0));
  for (const auto& p : partial) {
    for (std::size_t k = 0; k < n; ++k) (*grad)[k] += p[k];
  }
  return loss;
}

double moving_average(const std::vector<double>& v, std::size_t i, std::size_t window) {
  if (v.empty() || i >= v.size()) throw DomainError("moving_average index out of range");
  const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
  double s = 0.0;
  for (std::size_t k = lo; k <= i; ++k) s += v[k];
  return s / static_cast<double>(i + 1 - lo);
}

TrainResult train(const DenoiserConfig& arch, std::vector<float> params, std::uint64_t start_step,
                  std::span<const TrainingExample> data, const NoiseSchedule& schedule, const TrainConfig& cfg,
                  const std::function<void(std::uint64_t, double)>& on_step, Exec exec) {
  cfg.validate();
  if (data.empty()) throw DomainError("training dataset is empty");
  Denoiser<float> net(arch, params);
  const std::size_t n = net.parameters().size();
  std::vector<float> grad(n), last_good(net.parameters().begin(), net.parameters().end());
  std::vector<double> m(n, 0.0), v(n, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  TrainResult result;
  std::vector<Denoiser<float>::Input> inputs;
  std::vector<Denoiser<float>::Mat> targets;
  for (int s = 0; s < cfg.steps; ++s) {
    const std::uint64_t step = start_step + static_cast<std::uint64_t>(s);
    make_batch<float>(data, schedule, cfg.seed, step, cfg.batch_size, inputs, targets);
    double loss;
    try {
      loss = loss_and_gradient<float>(net, inputs, targets, cfg.loss, cfg.sw_projections,
                                      derive_seed(cfg.seed, streams::kTrain, ~step), &grad, exec);
    } catch (const NumericError& e) {
      result.diverged = true;
      result.message = "step " + std::to_string(step) + ": " + e.what();
      break;
    }
    double gnorm2 = 0.0;
    for (float g : grad) gnorm2 += static_cast<double>(g) * g;
    if (!std::isfinite(loss) || !std::isfinite(gnorm2)) {
      result.diverged = true;
      result.message = "non-finite loss at step " + std::to_string(step);
      break;
    }
    const double clip = cfg.grad_clip > 0.0 && std::sqrt(gnorm2) > cfg.grad_clip ? cfg.grad_clip / std::sqrt(gnorm2) : 1.0;
    const double t = static_cast<double>(s + 1);
    const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
    auto& p = net.parameters();
    for (std::size_t k = 0; k < n; ++k) {
      const double g = clip * grad[k];
      m[k] = beta1 * m[k] + (1.0 - beta1) * g;
      v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
      p[k] -= static_cast<float>(cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + adam_eps));
    }
    last_good.assign(p.begin(), p.end());
    result.losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  result.params = std::move(last_good);
  result.step = start_step + result.losses.size();
  return result;
}

#define SWARMDIFF_INSTANTIATE(S)                                                                                  \
  template double batch_loss<S>(const std::vector<Denoiser<S>::Mat>&, const std::vector<Denoiser<S>::Mat>&,      \
                                LossKind, int, std::uint64_t, std::vector<Denoiser<S>::Mat>*);                   \
  template void make_batch<S>(std::span<const TrainingExample>, const NoiseSchedule&, std::uint64_t,             \
                              std::uint64_t, int, std::vector<Denoiser<S>::Input>&,                              \
                              std::vector<Denoiser<S>::Mat>&);                                                   \
  template double loss_and_gradient<S>(const Denoiser<S>&, const std::vector<Denoiser<S>::Input>&,               \
                                       const std::vector<Denoiser<S>::Mat>&, LossKind, int, std::uint64_t,       \
                                       std::vector<S>*, Exec);
SWARMDIFF_INSTANTIATE(float)
SWARMDIFF_INSTANTIATE(double)
#undef SWARMDIFF_INSTANTIATE

}  // namespace swarmdiff::diffusion
