#pragma once

#include <Eigen/Core>

#include "swarmdiff/diffusion/normalizer.hpp"
#include "swarmdiff/env/esdf.hpp"

namespace swarmdiff::diffusion {

/// Chord samples between the start and goal means.
inline constexpr int kChordSamples = 16;
/// Per chord sample: squashed distance and the unit normal.
inline constexpr int kEsdfFeatureDim = 3 * kChordSamples + 4;
/// Normalized start and goal plus the ESDF features.
inline constexpr int kContextDim = 10 + kEsdfFeatureDim;

/// Length scale [m] of the tanh squashing applied to distances.
inline constexpr double kFeatureLengthScale = 5.0;

/// ESDF features along the start-goal chord: kChordSamples evenly spaced
/// points (endpoints included) each contributing tanh(s/l), n_x, n_y, followed
/// by tanh(min s / l), tanh(mean s / l), the fraction of chord points with
/// s < l, and the occupied-cell fraction of the whole grid.
Eigen::VectorXd esdf_features(const Vec2& start, const Vec2& goal, const env::EsdfGrid& grid);

/// Full conditioning vector [normalized start, normalized goal, esdf features].
Eigen::VectorXd context_vector(const gauss::GaussianState& start, const gauss::GaussianState& goal,
                               const Eigen::VectorXd& esdf_features, const Normalizer& normalizer);

}  // namespace swarmdiff::diffusion
