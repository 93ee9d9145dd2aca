#include "swarmdiff/diffusion/schedule.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::diffusion {

NoiseSchedule NoiseSchedule::cosine(int steps, double offset, double max_beta) {
  if (steps < 1) throw DomainError("schedule needs at least one step");
  auto f = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) betas[t - 1] = std::min(1.0 - f(t) / f(t - 1), max_beta);
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw DomainError("schedule needs at least one step");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0 && betas[i] < 1.0)) throw DomainError("schedule betas must lie in (0, 1)");
    if (i > 0 && betas[i] < betas[i - 1]) throw DomainError("schedule betas must be nondecreasing");
  }
  NoiseSchedule s;
  s.beta_ = std::move(betas);
  s.alpha_bar_.resize(s.beta_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < s.beta_.size(); ++i) {
    prod *= 1.0 - s.beta_[i];
    s.alpha_bar_[i] = prod;
  }
  return s;
}

double NoiseSchedule::posterior_variance(int t) const {
  check_step(t);
  return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t);
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    std::ostringstream msg;
    msg << "diffusion step " << t << " outside [1, " << steps() << "]";
    throw DomainError(msg.str());
  }
}

void to_json(nlohmann::json& j, const NoiseSchedule& s) { j = nlohmann::json{{"betas", s.betas()}}; }

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  return NoiseSchedule::from_betas(j.at("betas").get<std::vector<double>>());
}

Diffused forward_diffuse(const NodeArray& x0, int t, const NoiseSchedule& schedule, std::uint64_t seed) {
  schedule.check_step(t);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Diffused out;
  out.eps.resize(x0.rows(), 5);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    for (int c = 0; c < 5; ++c) out.eps(i, c) = normal(rng);
  }
  const double ab = schedule.alpha_bar(t);
  out.noisy = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * out.eps;
  return out;
}

NodeArray posterior_mean(const NodeArray& noisy, const NodeArray& eps, int t, const NoiseSchedule& schedule) {
  schedule.check_step(t);
  const double coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  return (noisy - coef * eps) / std::sqrt(schedule.alpha(t));
}

NodeArray predict_x0(const NodeArray& noisy, const NodeArray& eps, int t, const NoiseSchedule& schedule) {
  schedule.check_step(t);
  const double ab = schedule.alpha_bar(t);
  return (noisy - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

}  // namespace swarmdiff::diffusion
