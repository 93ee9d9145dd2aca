#include "swarmdiff/diffusion/normalizer.hpp"

#include <cmath>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::diffusion {

using gauss::GaussianState;

Vec5 Normalizer::unconstrained(const GaussianState& s) {
  Vec5 u;
  u << s.x, s.y, std::log(s.sigma_x), std::log(s.sigma_y), std::atanh(std::clamp(s.rho, -gauss::kMaxAbsRho, gauss::kMaxAbsRho));
  return u;
}

GaussianState Normalizer::constrained(const Vec5& u) {
  GaussianState s;
  s.x = u[0];
  s.y = u[1];
  s.sigma_x = std::max(std::exp(u[2]), gauss::kMinSigma);
  s.sigma_y = std::max(std::exp(u[3]), gauss::kMinSigma);
  s.rho = std::clamp(std::tanh(u[4]), -gauss::kMaxAbsRho, gauss::kMaxAbsRho);
  return s;
}

Normalizer Normalizer::fit(std::span<const costs::GaussianTrajectory> trajs) {
  Vec5 sum = Vec5::Zero(), sq = Vec5::Zero();
  double n = 0.0;
  for (const auto& t : trajs) {
    for (const auto& s : t.states) {
      const Vec5 u = unconstrained(s);
      sum += u;
      sq += u.cwiseProduct(u);
      n += 1.0;
    }
  }
  if (n < 1.0) throw DomainError("normalizer needs at least one node");
  Normalizer out;
  out.mean = sum / n;
  const Vec5 var = (sq / n - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
  // Channels with no spread (for example a fixed sigma) keep unit scale.
  for (int c = 0; c < 5; ++c) out.scale[c] = var[c] > 1e-12 ? std::sqrt(var[c]) : 1.0;
  return out;
}

Vec5 Normalizer::normalize(const GaussianState& s) const {
  return (unconstrained(s) - mean).cwiseQuotient(scale);
}

GaussianState Normalizer::denormalize(const Vec5& z) const {
  return constrained(mean + scale.cwiseProduct(z));
}

NodeArray Normalizer::normalize(const costs::GaussianTrajectory& t) const {
  NodeArray z(static_cast<Eigen::Index>(t.size()), 5);
  for (std::size_t i = 0; i < t.size(); ++i) z.row(static_cast<Eigen::Index>(i)) = normalize(t.states[i]).transpose();
  return z;
}

costs::GaussianTrajectory Normalizer::denormalize(const NodeArray& z, double dt) const {
  costs::GaussianTrajectory t;
  t.dt = dt;
  t.states.reserve(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) t.states.push_back(denormalize(Vec5(z.row(i).transpose())));
  return t;
}

Vec5 Normalizer::jacobian(const Vec5& z) const {
  const Vec5 u = mean + scale.cwiseProduct(z);
  Vec5 j;
  j[0] = scale[0];
  j[1] = scale[1];
  j[2] = std::exp(u[2]) * scale[2];
  j[3] = std::exp(u[3]) * scale[3];
  const double r = std::tanh(u[4]);
  j[4] = (1.0 - r * r) * scale[4];
  return j;
}

void Normalizer::validate() const {
  if (!mean.allFinite() || !scale.allFinite() || (scale.array() <= 0.0).any()) {
    throw DomainError("normalizer statistics must be finite with positive scales");
  }
}

void to_json(nlohmann::json& j, const Normalizer& n) {
  j = nlohmann::json{{"mean", std::vector<double>(n.mean.data(), n.mean.data() + 5)},
                     {"scale", std::vector<double>(n.scale.data(), n.scale.data() + 5)}};
}

void from_json(const nlohmann::json& j, Normalizer& n) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("scale").get<std::vector<double>>();
  if (m.size() != 5 || s.size() != 5) throw DomainError("normalizer needs 5 means and 5 scales");
  for (int c = 0; c < 5; ++c) {
    n.mean[c] = m[c];
    n.scale[c] = s[c];
  }
  n.validate();
}

}  // namespace swarmdiff::diffusion
