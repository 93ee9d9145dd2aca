#pragma once

#include <span>

#include <nlohmann/json.hpp>

#include "swarmdiff/costs/costs.hpp"
#include "swarmdiff/diffusion/schedule.hpp"

namespace swarmdiff::diffusion {

/// Maps Gaussian nodes to unconstrained coordinates [x, y, log sx, log sy,
/// atanh rho] and then per channel to (u - mean) / scale. Any real vector
/// denormalizes to a valid GaussianState.
struct Normalizer {
  Vec5 mean = Vec5::Zero();
  Vec5 scale = Vec5::Ones();

  /// Per-channel statistics over every node of every trajectory.
  static Normalizer fit(std::span<const costs::GaussianTrajectory> trajs);

  static Vec5 unconstrained(const gauss::GaussianState& s);
  static gauss::GaussianState constrained(const Vec5& u);

  Vec5 normalize(const gauss::GaussianState& s) const;
  gauss::GaussianState denormalize(const Vec5& z) const;
  NodeArray normalize(const costs::GaussianTrajectory& t) const;
  costs::GaussianTrajectory denormalize(const NodeArray& z, double dt) const;
  /// d state / d z per channel at z (the map is diagonal).
  Vec5 jacobian(const Vec5& z) const;

  void validate() const;
  bool operator==(const Normalizer&) const = default;
};

void to_json(nlohmann::json& j, const Normalizer& n);
void from_json(const nlohmann::json& j, Normalizer& n);

}  // namespace swarmdiff::diffusion
