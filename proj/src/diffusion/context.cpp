#include "swarmdiff/diffusion/context.hpp"

#include <cmath>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::diffusion {

Eigen::VectorXd esdf_features(const Vec2& start, const Vec2& goal, const env::EsdfGrid& grid) {
  Eigen::VectorXd f(kEsdfFeatureDim);
  double min_s = std::numeric_limits<double>::infinity();
  double sum_s = 0.0;
  int close = 0;
  for (int k = 0; k < kChordSamples; ++k) {
    const double a = static_cast<double>(k) / (kChordSamples - 1);
    const auto q = grid.query((1.0 - a) * start + a * goal);
    f[3 * k] = std::tanh(q.distance / kFeatureLengthScale);
    f[3 * k + 1] = q.normal.x();
    f[3 * k + 2] = q.normal.y();
    min_s = std::min(min_s, q.distance);
    sum_s += q.distance;
    if (q.distance < kFeatureLengthScale) ++close;
  }
  std::size_t occupied = 0;
  for (double v : grid.values()) occupied += v < 0.0 ? 1 : 0;
  const int base = 3 * kChordSamples;
  f[base] = std::tanh(min_s / kFeatureLengthScale);
  f[base + 1] = std::tanh(sum_s / kChordSamples / kFeatureLengthScale);
  f[base + 2] = static_cast<double>(close) / kChordSamples;
  f[base + 3] = static_cast<double>(occupied) / static_cast<double>(grid.values().size());
  return f;
}

Eigen::VectorXd context_vector(const gauss::GaussianState& start, const gauss::GaussianState& goal,
                               const Eigen::VectorXd& features, const Normalizer& normalizer) {
  if (features.size() != kEsdfFeatureDim) throw DomainError("ESDF feature vector has the wrong length");
  Eigen::VectorXd c(kContextDim);
  c.head<5>() = normalizer.normalize(start);
  c.segment<5>(5) = normalizer.normalize(goal);
  c.tail(kEsdfFeatureDim) = features;
  return c;
}

}  // namespace swarmdiff::diffusion
