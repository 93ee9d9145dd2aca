#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmdiff/common/exec.hpp"
#include "swarmdiff/diffusion/denoiser.hpp"
#include "swarmdiff/diffusion/schedule.hpp"

namespace swarmdiff::diffusion {

enum class LossKind { mse, sliced_wasserstein };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  int steps = 3000;
  int batch_size = 16;
  double learning_rate = 1e-3;
  LossKind loss = LossKind::mse;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;  ///< global gradient-norm clip, 0 disables
  int sw_projections = 64;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// One training pair: normalized H x 5 trajectory and its context vector.
struct TrainingExample {
  NodeArray z;
  Eigen::VectorXd context;
};

/// Loss over a batch of predictions and targets, with dLoss/dpred. MSE
/// averages over every entry. The sliced-Wasserstein loss projects each
/// sample's H tokens on `projections` random unit directions, sorts both
/// projected sets and averages the squared differences.
template <typename Scalar>
double batch_loss(const std::vector<typename Denoiser<Scalar>::Mat>& pred,
                  const std::vector<typename Denoiser<Scalar>::Mat>& target, LossKind kind, int projections,
                  std::uint64_t projection_seed, std::vector<typename Denoiser<Scalar>::Mat>* d_pred);

/// Builds the noisy inputs and noise targets for a batch from per-sample seeds.
template <typename Scalar>
void make_batch(std::span<const TrainingExample> data, const NoiseSchedule& schedule, std::uint64_t seed,
                std::uint64_t step, int batch_size, std::vector<typename Denoiser<Scalar>::Input>& inputs,
                std::vector<typename Denoiser<Scalar>::Mat>& targets);

/// Forward, loss and backward over one batch. Per-sample gradients are summed
/// in batch order so the result does not depend on the thread count.
template <typename Scalar>
double loss_and_gradient(const Denoiser<Scalar>& net, const std::vector<typename Denoiser<Scalar>::Input>& inputs,
                         const std::vector<typename Denoiser<Scalar>::Mat>& targets, LossKind kind, int projections,
                         std::uint64_t projection_seed, std::vector<Scalar>* grad, Exec exec = Exec::parallel);

struct TrainResult {
  std::vector<float> params;
  std::uint64_t step = 0;          ///< global step counter after the run
  std::vector<double> losses;      ///< one entry per step taken in this run
  bool diverged = false;           ///< true when a non-finite loss stopped training
  std::string message;
};

/// Moving average of the last `window` entries ending at index i (inclusive).
double moving_average(const std::vector<double>& v, std::size_t i, std::size_t window = 100);

/// Adam with global-norm clipping. Batches are drawn with seeds derived from
/// (cfg.seed, global step), so resuming from `start_step` continues the same
/// stream. On a non-finite loss the last finite parameters are returned with
/// diverged = true.
TrainResult train(const DenoiserConfig& arch, std::vector<float> params, std::uint64_t start_step,
                  std::span<const TrainingExample> data, const NoiseSchedule& schedule, const TrainConfig& cfg,
                  const std::function<void(std::uint64_t, double)>& on_step = {}, Exec exec = Exec::parallel);

}  // namespace swarmdiff::diffusion
