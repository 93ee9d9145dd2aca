#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swarmdiff/diffusion/denoiser.hpp"
#include "swarmdiff/diffusion/normalizer.hpp"
#include "swarmdiff/diffusion/schedule.hpp"

namespace swarmdiff::diffusion {

/// Everything needed to sample: architecture, weights, normalization and
/// schedule, plus the horizon and node spacing the model was trained for.
struct DiffusionModel {
  DenoiserConfig denoiser;
  Normalizer normalizer;
  NoiseSchedule schedule = NoiseSchedule::cosine(100);
  int horizon = 64;
  double dt = 1.0;
  std::vector<float> params;
  std::uint64_t step = 0;
  std::string config_hash;

  Denoiser<float> network() const { return Denoiser<float>(denoiser, params); }
};

inline constexpr int kCheckpointVersion = 1;

/// Checkpoint: one JSON header line {"format": "swarmdiff-checkpoint",
/// "version", "denoiser", "normalizer", "schedule", "horizon", "dt", "step",
/// "config_hash", "param_count", "layout"} and then param_count little-endian
/// f32 values in layout order.
std::vector<char> encode_checkpoint(const DiffusionModel& model);
DiffusionModel decode_checkpoint(const std::vector<char>& bytes);
void write_checkpoint(const std::string& path, const DiffusionModel& model);
DiffusionModel read_checkpoint(const std::string& path);

}  // namespace swarmdiff::diffusion
