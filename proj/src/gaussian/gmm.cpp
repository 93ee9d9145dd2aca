#include "swarmdiff/gaussian/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/rng.hpp"

namespace swarmdiff::gauss {
namespace {

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double gaussian_log_density(const Vec2& mean, const Mat2& cov, const Vec2& p) {
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  const Vec2 d = p - mean;
  // inverse of a 2x2: [d -b; -c a] / det
  const double q = (cov(1, 1) * d.x() * d.x() - 2.0 * cov(0, 1) * d.x() * d.y() +
                    cov(0, 0) * d.y() * d.y()) /
                   det;
  return -0.5 * q - 0.5 * std::log(det) - std::log(2.0 * std::numbers::pi);
}

Mat2 regularize(Mat2 cov) {
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  if (min_eigenvalue(cov) < kEmJitter) cov += kEmJitter * Mat2::Identity();
  return cov;
}

}  // namespace

Gmm::Gmm(std::vector<GaussianState> components, std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty()) throw DomainError("GMM needs at least one component");
  if (components_.size() != weights_.size()) {
    throw DomainError("GMM has " + std::to_string(components_.size()) + " components but " +
                      std::to_string(weights_.size()) + " weights");
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw DomainError("GMM weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("GMM weights must sum to 1");
  for (const auto& c : components_) c.validate();
}

double Gmm::component_log_density(std::size_t i, const Vec2& p) const {
  const auto& c = components_[i];
  return gaussian_log_density(c.mean(), c.covariance(), p);
}

double Gmm::log_density(const Vec2& p) const {
  std::vector<double> terms(size());
  for (std::size_t i = 0; i < size(); ++i) {
    terms[i] = weights_[i] > 0.0 ? std::log(weights_[i]) + component_log_density(i, p)
                                 : -std::numeric_limits<double>::infinity();
  }
  return log_sum_exp(terms);
}

std::vector<double> Gmm::responsibilities(const Vec2& p) const {
  std::vector<double> terms(size());
  for (std::size_t i = 0; i < size(); ++i) {
    terms[i] = weights_[i] > 0.0 ? std::log(weights_[i]) + component_log_density(i, p)
                                 : -std::numeric_limits<double>::infinity();
  }
  const double norm = log_sum_exp(terms);
  std::vector<double> r(size(), 0.0);
  if (!std::isfinite(norm)) return r;
  for (std::size_t i = 0; i < size(); ++i) r[i] = std::exp(terms[i] - norm);
  return r;
}

double Gmm::mahalanobis2(std::size_t i, const Vec2& p) const {
  const Mat2 cov = components_[i].covariance();
  const Vec2 d = p - components_[i].mean();
  return d.dot(cov.inverse() * d);
}

EmResult fit_gmm_em_traced(std::span<const Vec2> points, int k, std::uint64_t seed,
                           const EmOptions& options) {
  if (k < 1) throw DomainError("EM needs k >= 1");
  const auto n = points.size();
  if (n < 2 * static_cast<std::size_t>(k)) {
    throw DomainError("EM needs at least 2k points (" + std::to_string(n) + " given for k = " +
                      std::to_string(k) + ")");
  }
  const auto kk = static_cast<std::size_t>(k);

  // Global moments seed every component's covariance.
  Vec2 mean = Vec2::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(n);
  Mat2 cov = Mat2::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  cov = regularize(cov / static_cast<double>(n));

  // k-means++ seeding of the means.
  Rng rng = make_rng(seed, streams::kEm);
  std::vector<Vec2> means;
  means.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (means.size() < kk) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& m : means) best = std::min(best, (points[i] - m).squaredNorm());
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= d2[pick];
        if (u <= 0.0) break;
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    means.push_back(points[pick]);
  }

  std::vector<Mat2> covs(kk, cov);
  std::vector<double> weights(kk, 1.0 / static_cast<double>(kk));
  std::vector<double> resp(n * kk);
  std::vector<double> terms(kk);
  std::vector<double> trace;

  auto e_step = [&]() {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < kk; ++c) {
        terms[c] = weights[c] > 0.0
                       ? std::log(weights[c]) + gaussian_log_density(means[c], covs[c], points[i])
                       : -std::numeric_limits<double>::infinity();
      }
      const double norm = log_sum_exp(terms);
      ll += norm;
      for (std::size_t c = 0; c < kk; ++c) resp[i * kk + c] = std::exp(terms[c] - norm);
    }
    return ll / static_cast<double>(n);
  };

  double ll = e_step();
  trace.push_back(ll);
  for (int it = 0; it < options.max_iterations; ++it) {
    for (std::size_t c = 0; c < kk; ++c) {
      double nk = 0.0;
      Vec2 m = Vec2::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * kk + c];
        m += resp[i * kk + c] * points[i];
      }
      if (nk <= 1e-12) {
        // Empty component: keep its previous parameters with zero weight.
        weights[c] = 0.0;
        continue;
      }
      m /= nk;
      Mat2 s = Mat2::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 d = points[i] - m;
        s += resp[i * kk + c] * d * d.transpose();
      }
      means[c] = m;
      covs[c] = regularize(s / nk);
      weights[c] = nk / static_cast<double>(n);
    }
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (auto& w : weights) w /= wsum;

    const double next = e_step();
    trace.push_back(next);
    const bool converged = std::abs(next - ll) < options.tolerance;
    ll = next;
    if (converged) break;
  }

  std::vector<GaussianState> comps;
  for (std::size_t c = 0; c < kk; ++c) comps.push_back(GaussianState::from_covariance(means[c], covs[c]));
  return {Gmm(std::move(comps), std::move(weights)), std::move(trace)};
}

Gmm fit_gmm_em(std::span<const Vec2> points, int k, std::uint64_t seed, const EmOptions& options) {
  return fit_gmm_em_traced(points, k, seed, options).gmm;
}

Points sample_gmm(const Gmm& gmm, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, streams::kGmmSample);
  std::discrete_distribution<std::size_t> pick(gmm.weights().begin(), gmm.weights().end());
  std::normal_distribution<double> normal(0.0, 1.0);
  Points out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& c = gmm.component(pick(rng));
    const double z0 = normal(rng);
    const double z1 = normal(rng);
    const double lx = c.sigma_x * z0;
    const double ly = c.sigma_y * (c.rho * z0 + std::sqrt(1.0 - c.rho * c.rho) * z1);
    out.emplace_back(c.x + lx, c.y + ly);
  }
  return out;
}

void to_json(nlohmann::json& j, const Gmm& g) {
  j = nlohmann::json{{"weights", g.weights()}, {"components", g.components()}};
}

Gmm gmm_from_json(const nlohmann::json& j) {
  return Gmm(j.at("components").get<std::vector<GaussianState>>(),
             j.at("weights").get<std::vector<double>>());
}

}  // namespace swarmdiff::gauss
