#include "swarmdiff/gaussian/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::gauss {

Mat2 GaussianState::covariance() const {
  const double c = rho * sigma_x * sigma_y;
  Mat2 m;
  m << sigma_x * sigma_x, c, c, sigma_y * sigma_y;
  return m;
}

Vec5 GaussianState::to_vector() const {
  Vec5 v;
  v << x, y, sigma_x, sigma_y, rho;
  return v;
}

GaussianState GaussianState::from_vector(const Vec5& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

GaussianState GaussianState::from_covariance(const Vec2& mean, const Mat2& cov) {
  const double sx = std::sqrt(std::max(cov(0, 0), 0.0));
  const double sy = std::sqrt(std::max(cov(1, 1), 0.0));
  const double r = (sx > 0.0 && sy > 0.0) ? 0.5 * (cov(0, 1) + cov(1, 0)) / (sx * sy) : 0.0;
  return GaussianState{mean.x(), mean.y(), sx, sy, r}.clamped();
}

bool GaussianState::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(sigma_x) && std::isfinite(sigma_y) &&
         std::isfinite(rho) && sigma_x >= kMinSigma && sigma_y >= kMinSigma &&
         std::abs(rho) <= kMaxAbsRho;
}

void GaussianState::validate() const {
  std::ostringstream msg;
  if (!std::isfinite(x) || !std::isfinite(y)) msg << "non-finite mean";
  else if (!(sigma_x >= kMinSigma) || !(sigma_y >= kMinSigma)) msg << "sigma below " << kMinSigma << " m";
  else if (!(std::abs(rho) <= kMaxAbsRho)) msg << "|rho| = " << std::abs(rho) << " exceeds " << kMaxAbsRho;
  else return;
  throw DomainError("invalid Gaussian state: " + msg.str());
}

GaussianState GaussianState::clamped() const {
  GaussianState g = *this;
  g.sigma_x = std::max(std::isfinite(sigma_x) ? sigma_x : kMinSigma, kMinSigma);
  g.sigma_y = std::max(std::isfinite(sigma_y) ? sigma_y : kMinSigma, kMinSigma);
  g.rho = std::clamp(std::isfinite(rho) ? rho : 0.0, -kMaxAbsRho, kMaxAbsRho);
  return g;
}

double min_eigenvalue(const Mat2& m) {
  const double half_tr = 0.5 * (m(0, 0) + m(1, 1));
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return half_tr - std::sqrt(std::max(half_tr * half_tr - det, 0.0));
}

Mat2 spd_sqrt(const Mat2& m) {
  const double scale = std::max({std::abs(m(0, 0)), std::abs(m(1, 1)), 1.0});
  if (std::abs(m(0, 1) - m(1, 0)) > 1e-9 * scale) {
    throw NumericError("spd_sqrt: input is not symmetric");
  }
  const double lmin = min_eigenvalue(m);
  if (!(lmin > 0.0)) {
    std::ostringstream msg;
    msg << "spd_sqrt: matrix is not positive definite (smallest eigenvalue " << lmin << ")";
    throw NumericError(msg.str());
  }
  const double s = std::sqrt(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
  const double t = std::sqrt(m(0, 0) + m(1, 1) + 2.0 * s);
  Mat2 r = (m + s * Mat2::Identity()) / t;
  const double off = 0.5 * (r(0, 1) + r(1, 0));
  r(0, 1) = r(1, 0) = off;
  return r;
}

W2Jet wasserstein2_jet(const GaussianState& a, const GaussianState& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  const double mean_term = dx * dx + dy * dy;

  W2Jet jet;
  const bool same_shape = a.sigma_x == b.sigma_x && a.sigma_y == b.sigma_y && a.rho == b.rho;

  const double sx1 = a.sigma_x, sy1 = a.sigma_y, r1 = a.rho;
  const double sx2 = b.sigma_x, sy2 = b.sigma_y, r2 = b.rho;
  const double tr1 = sx1 * sx1 + sy1 * sy1;
  const double tr2 = sx2 * sx2 + sy2 * sy2;
  const double prod = (sx1 * sx2) * (sy1 * sy2);
  const double g = std::sqrt((1.0 - r1 * r1) * (1.0 - r2 * r2));
  // tr(S1 S2) + 2 sqrt(det S1 det S2) = (tr sqrt(S1^{1/2} S2 S1^{1/2}))^2
  // Every product is written in a form invariant under swapping a and b so
  // the distance is bitwise symmetric.
  const double p = (sx1 * sx2) * (sx1 * sx2) + (sy1 * sy2) * (sy1 * sy2) + 2.0 * prod * (r1 * r2 + g);
  const double f = std::sqrt(p);
  const double bures = same_shape ? 0.0 : std::max(tr1 + tr2 - 2.0 * f, 0.0);
  const double d2 = mean_term + bures;
  jet.value = std::sqrt(d2);
  if (!(jet.value > 1e-12)) return jet;

  const double inv = 1.0 / (2.0 * jet.value);
  jet.d_first[0] = 2.0 * dx * inv;
  jet.d_first[1] = 2.0 * dy * inv;
  jet.d_second[0] = -jet.d_first[0];
  jet.d_second[1] = -jet.d_first[1];
  const double k = r1 * r2 + g;
  const double dp_sx1 = 2.0 * sx1 * sx2 * sx2 + 2.0 * sy1 * sx2 * sy2 * k;
  const double dp_sy1 = 2.0 * sy1 * sy2 * sy2 + 2.0 * sx1 * sx2 * sy2 * k;
  const double dp_sx2 = 2.0 * sx2 * sx1 * sx1 + 2.0 * sy2 * sx1 * sy1 * k;
  const double dp_sy2 = 2.0 * sy2 * sy1 * sy1 + 2.0 * sx2 * sx1 * sy1 * k;
  const double dg_r1 = g > 0.0 ? -r1 * (1.0 - r2 * r2) / g : 0.0;
  const double dg_r2 = g > 0.0 ? -r2 * (1.0 - r1 * r1) / g : 0.0;
  const double dp_r1 = 2.0 * prod * (r2 + dg_r1);
  const double dp_r2 = 2.0 * prod * (r1 + dg_r2);
  // d(bures) = d(tr1 + tr2) - dp / f
  jet.d_first[2] = (2.0 * sx1 - dp_sx1 / f) * inv;
  jet.d_first[3] = (2.0 * sy1 - dp_sy1 / f) * inv;
  jet.d_first[4] = (-dp_r1 / f) * inv;
  jet.d_second[2] = (2.0 * sx2 - dp_sx2 / f) * inv;
  jet.d_second[3] = (2.0 * sy2 - dp_sy2 / f) * inv;
  jet.d_second[4] = (-dp_r2 / f) * inv;
  return jet;
}

double wasserstein2(const GaussianState& a, const GaussianState& b) {
  return wasserstein2_jet(a, b).value;
}

AffineMap ot_map(const GaussianState& from, const GaussianState& to) {
  const Mat2 s1 = from.covariance();
  const double lmin = min_eigenvalue(s1);
  const double lmax = s1.trace() - lmin;
  if (!(lmin > 0.0) || lmax / lmin > 1e8) {
    std::ostringstream msg;
    msg << "ot_map: source covariance is ill-conditioned (condition number " << lmax / lmin << ")";
    throw NumericError(msg.str());
  }
  const Mat2 root = spd_sqrt(s1);
  const Mat2 root_inv = root.inverse();
  Mat2 inner = root * to.covariance() * root;
  inner(0, 1) = inner(1, 0) = 0.5 * (inner(0, 1) + inner(1, 0));
  Mat2 a = root_inv * spd_sqrt(inner) * root_inv;
  a(0, 1) = a(1, 0) = 0.5 * (a(0, 1) + a(1, 0));
  AffineMap map;
  map.A = a;
  map.b = to.mean() - a * from.mean();
  return map;
}

void to_json(nlohmann::json& j, const GaussianState& g) {
  j = nlohmann::json::array({g.x, g.y, g.sigma_x, g.sigma_y, g.rho});
}

void from_json(const nlohmann::json& j, GaussianState& g) {
  if (!j.is_array() || j.size() != 5) throw DomainError("Gaussian state must be a 5-element array");
  g = GaussianState{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(),
                    j[4].get<double>()};
}

}  // namespace swarmdiff::gauss
