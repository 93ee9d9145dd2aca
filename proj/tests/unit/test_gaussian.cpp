#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/gaussian/gmm.hpp"

using namespace swarmdiff;
using namespace swarmdiff::gauss;

namespace {

GaussianState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-20.0, 20.0), sig(0.1, 5.0), cor(-0.95, 0.95);
  return {pos(rng), pos(rng), sig(rng), sig(rng), cor(rng)};
}

Mat2 random_spd(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Mat2 a;
  a << n(rng), n(rng), n(rng), n(rng);
  return a * a.transpose() + 0.05 * Mat2::Identity();
}

// Eigendecomposition square root, independent of the closed form.
Mat2 eig_sqrt(const Mat2& m) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double w2_oracle(const GaussianState& a, const GaussianState& b) {
  const Mat2 s1 = a.covariance(), s2 = b.covariance();
  const Mat2 r = eig_sqrt(s1);
  const double bures = (s1 + s2 - 2.0 * eig_sqrt(r * s2 * r)).trace();
  return std::sqrt((a.mean() - b.mean()).squaredNorm() + std::max(0.0, bures));
}

}  // namespace

TEST_CASE("GaussianState bounds and round trip") {
  GaussianState g{1.0, 2.0, 0.5, 2.0, 0.3};
  CHECK(g.covariance().determinant() > 0.0);
  const auto back = GaussianState::from_covariance(g.mean(), g.covariance());
  CHECK(back.sigma_x == doctest::Approx(g.sigma_x).epsilon(1e-12));
  CHECK(back.sigma_y == doctest::Approx(g.sigma_y).epsilon(1e-12));
  CHECK(back.rho == doctest::Approx(g.rho).epsilon(1e-12));
  CHECK_THROWS_AS((GaussianState{0, 0, 1e-5, 1, 0}.validate()), DomainError);
  CHECK_THROWS_AS((GaussianState{0, 0, 1, 1, 1.0}.validate()), DomainError);
  CHECK((GaussianState{0, 0, 1, 1, 1.0}.clamped().rho) == kMaxAbsRho);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_state(rng);
    const auto r = GaussianState::from_covariance(s.mean(), s.covariance());
    CHECK((r.to_vector() - s.to_vector()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("spd_sqrt") {
  CHECK((spd_sqrt(Mat2::Identity()) - Mat2::Identity()).norm() < 1e-15);
  Mat2 d = Mat2::Zero();
  d.diagonal() << 4.0, 9.0;
  Mat2 e = Mat2::Zero();
  e.diagonal() << 2.0, 3.0;
  CHECK((spd_sqrt(d) - e).norm() < 1e-12);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Mat2 m = random_spd(rng);
    const Mat2 s = spd_sqrt(m);
    CHECK((s * s - m).norm() < 1e-9);
    CHECK(min_eigenvalue(s) > 0.0);
  }
  Mat2 bad;
  bad << 1.0, 2.0, 2.0, 1.0;
  try {
    spd_sqrt(bad);
    FAIL("expected NumericError");
  } catch (const NumericError& err) {
    CHECK(std::string(err.what()).find("-1") != std::string::npos);
  }
}

TEST_CASE("wasserstein2 closed-form cases") {
  const GaussianState a{0, 0, 1, 1, 0};
  CHECK(wasserstein2(a, a) == 0.0);
  CHECK(wasserstein2(a, GaussianState{3, 4, 1, 1, 0}) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(std::abs(wasserstein2(GaussianState{0, 0, 2, 1, 0}, a) - 1.0) < 1e-9);
  const GaussianState c{1.5, -2, 0.7, 1.9, -0.4};
  CHECK(wasserstein2(c, c) == 0.0);
}

TEST_CASE("wasserstein2 agrees with an eigendecomposition oracle") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_state(rng), b = random_state(rng);
    CHECK(std::abs(wasserstein2(a, b) - w2_oracle(a, b)) < 1e-9);
  }
}

TEST_CASE("wasserstein2 metric axioms on random triples") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_state(rng), b = random_state(rng), c = random_state(rng);
    CHECK(wasserstein2(a, b) == wasserstein2(b, a));
    CHECK(wasserstein2(a, c) <= wasserstein2(a, b) + wasserstein2(b, c) + 1e-9);
    CHECK(wasserstein2(a, b) >= 0.0);
  }
}

TEST_CASE("wasserstein2 translation invariance") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    auto a = random_state(rng), b = random_state(rng);
    const double before = wasserstein2(a, b);
    const double dx = shift(rng), dy = shift(rng);
    a.x += dx;
    b.x += dx;
    a.y += dy;
    b.y += dy;
    CHECK(std::abs(wasserstein2(a, b) - before) < 1e-12 * std::max(1.0, before) * 10);
  }
}

TEST_CASE("wasserstein2_jet matches central differences") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_state(rng), b = random_state(rng);
    const auto jet = wasserstein2_jet(a, b);
    CHECK(jet.value == doctest::Approx(wasserstein2(a, b)).epsilon(1e-12));
    for (int k = 0; k < 5; ++k) {
      const double h = 1e-6;
      Vec5 va = a.to_vector(), vb = b.to_vector();
      Vec5 ap = va, am = va, bp = vb, bm = vb;
      ap[k] += h;
      am[k] -= h;
      bp[k] += h;
      bm[k] -= h;
      const double fa = (wasserstein2(GaussianState::from_vector(ap), b) -
                         wasserstein2(GaussianState::from_vector(am), b)) / (2 * h);
      const double fb = (wasserstein2(a, GaussianState::from_vector(bp)) -
                         wasserstein2(a, GaussianState::from_vector(bm))) / (2 * h);
      CHECK(jet.d_first[k] == doctest::Approx(fa).epsilon(1e-5).scale(1.0));
      CHECK(jet.d_second[k] == doctest::Approx(fb).epsilon(1e-5).scale(1.0));
    }
  }
  const GaussianState s{1, 1, 1, 1, 0};
  CHECK(wasserstein2_jet(s, s).d_first.norm() == 0.0);
}

TEST_CASE("ot_map") {
  const GaussianState g{1, 2, 1.3, 0.6, 0.2};
  const auto id = ot_map(g, g);
  CHECK((id.A - Mat2::Identity()).norm() < 1e-12);
  CHECK((id.apply(Vec2(5, -3)) - Vec2(5, -3)).norm() < 1e-12);

  const auto shift = ot_map(GaussianState{0, 0, 1, 1, 0}, GaussianState{3, 4, 1, 1, 0});
  CHECK((shift.A - Mat2::Identity()).norm() < 1e-12);
  CHECK((shift.apply(Vec2(1, 1)) - Vec2(4, 5)).norm() < 1e-12);

  const auto scale = ot_map(GaussianState{0, 0, 1, 1, 0}, GaussianState{0, 0, 2, 2, 0});
  CHECK((scale.A - 2.0 * Mat2::Identity()).norm() < 1e-12);

  CHECK_THROWS_AS(ot_map(GaussianState{0, 0, 1e-4, 10.0, 0}, g), NumericError);

  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_state(rng), b = random_state(rng);
    const auto t = ot_map(a, b);
    CHECK((t.A - t.A.transpose()).norm() < 1e-12);
    CHECK(min_eigenvalue(t.A) > 0.0);
    CHECK((t.apply(a.mean()) - b.mean()).norm() < 1e-9);
    const Mat2 pushed = t.A * a.covariance() * t.A.transpose();
    CHECK((pushed - b.covariance()).norm() < 1e-8 * std::max(1.0, b.covariance().norm()));
  }
}

TEST_CASE("ot_map pushforward by sampling and refitting") {
  const GaussianState a{0, 0, 1, 1, 0}, b{2, -1, 2, 2, 0};
  const auto t = ot_map(a, b);
  const Gmm src({a}, {1.0});
  auto pts = sample_gmm(src, 10000, 11);
  for (auto& p : pts) p = t.apply(p);
  const auto fit = fit_gmm_em(pts, 1, 3);
  const auto& c = fit.component(0);
  CHECK(std::abs(c.x - 2.0) < 0.1);
  CHECK(std::abs(c.y + 1.0) < 0.1);
  CHECK(std::abs(c.sigma_x - 2.0) < 0.1);
  CHECK(std::abs(c.sigma_y - 2.0) < 0.1);
  CHECK(std::abs(c.rho) < 0.05);
}

TEST_CASE("Gmm validation and densities") {
  const GaussianState a{0, 0, 1, 1, 0};
  CHECK_THROWS_AS(Gmm({}, {}), DomainError);
  CHECK_THROWS_AS(Gmm({a}, {0.5}), DomainError);
  CHECK_THROWS_AS(Gmm({a, a}, {1.5, -0.5}), DomainError);
  CHECK_THROWS_AS(Gmm({a}, {1.0, 0.0}), DomainError);
  const Gmm g({a, GaussianState{4, 0, 1, 1, 0}}, {0.5, 0.5});
  CHECK(g.log_density(Vec2(0, 0)) == doctest::Approx(std::log(0.5 / (2 * M_PI) * (1 + std::exp(-8.0)))));
  const auto r = g.responsibilities(Vec2(2, 0));
  CHECK(r[0] == doctest::Approx(0.5));
  CHECK(g.mahalanobis2(1, Vec2(4, 3)) == doctest::Approx(9.0));
}

TEST_CASE("fit_gmm_em") {
  SUBCASE("k=1 gives the biased sample moments") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    Points pts;
    for (int i = 0; i < 500; ++i) pts.emplace_back(3 + 2 * n(rng), -1 + 0.5 * n(rng) + 0.3 * n(rng));
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= pts.size();
    Mat2 cov = Mat2::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    cov /= pts.size();
    const auto g = fit_gmm_em(pts, 1, 1);
    CHECK(g.weight(0) == 1.0);
    CHECK((g.component(0).mean() - mean).norm() < 1e-9);
    CHECK((g.component(0).covariance() - cov).norm() < 1e-9);
  }
  SUBCASE("two separated clusters") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    Points pts;
    Vec2 m0 = Vec2::Zero(), m1 = Vec2::Zero();
    for (int i = 0; i < 200; ++i) {
      pts.emplace_back(n(rng), n(rng));
      m0 += pts.back();
    }
    for (int i = 0; i < 200; ++i) {
      pts.emplace_back(20 + n(rng), n(rng));
      m1 += pts.back();
    }
    m0 /= 200.0;
    m1 /= 200.0;
    const auto g = fit_gmm_em(pts, 2, 4);
    const int lo = g.component(0).x < g.component(1).x ? 0 : 1;
    CHECK((g.component(lo).mean() - m0).norm() < 0.2);
    CHECK((g.component(1 - lo).mean() - m1).norm() < 0.2);
    CHECK(std::abs(g.weight(0) - 0.5) < 0.05);
  }
  SUBCASE("duplicate points collapse to the jitter floor") {
    Points pts(20, Vec2(2.0, 3.0));
    const auto g = fit_gmm_em(pts, 1, 1);
    CHECK((g.component(0).mean() - Vec2(2, 3)).norm() < 1e-12);
    CHECK((g.component(0).covariance() - kEmJitter * Mat2::Identity()).norm() < 1e-12);
    CHECK_NOTHROW(fit_gmm_em(pts, 3, 1));
  }
  SUBCASE("determinism and monotone log-likelihood") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> n;
      std::uniform_int_distribution<int> pick(0, 3);
      Points pts;
      for (int i = 0; i < 300; ++i) {
        const int c = pick(rng);
        pts.emplace_back(4.0 * c + n(rng), 2.0 * (c % 2) + 0.7 * n(rng));
      }
      const auto a = fit_gmm_em_traced(pts, 4, seed);
      const auto b = fit_gmm_em_traced(pts, 4, seed);
      CHECK(a.gmm == b.gmm);
      for (std::size_t i = 1; i < a.log_likelihood.size(); ++i) {
        CHECK(a.log_likelihood[i] >= a.log_likelihood[i - 1] - 1e-10);
      }
    }
  }
  SUBCASE("preconditions") {
    Points pts(3, Vec2(0, 0));
    CHECK_THROWS_AS(fit_gmm_em(pts, 2, 1), DomainError);
    CHECK_THROWS_AS(fit_gmm_em(pts, 0, 1), DomainError);
  }
}

TEST_CASE("sample_gmm") {
  const GaussianState a{1.0, -2.0, 1.0, 1.5, 0.4};
  CHECK(sample_gmm(Gmm({a}, {1.0}), 0, 1).empty());
  const auto pts = sample_gmm(Gmm({a}, {1.0}), 100000, 2);
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= pts.size();
  CHECK((mean - a.mean()).cwiseAbs().maxCoeff() < 0.02);
  CHECK(sample_gmm(Gmm({a}, {1.0}), 10, 5) == sample_gmm(Gmm({a}, {1.0}), 10, 5));

  const GaussianState far{100, 100, 0.1, 0.1, 0};
  for (const auto& p : sample_gmm(Gmm({a, far}, {1.0, 0.0}), 1000, 3)) CHECK((p - a.mean()).norm() < 20.0);
}

TEST_CASE("JSON forms") {
  const GaussianState a{1, 2, 3, 4, 0.5};
  nlohmann::json j = a;
  CHECK(j.dump() == "[1.0,2.0,3.0,4.0,0.5]");
  CHECK(j.get<GaussianState>() == a);
  const Gmm g({a, GaussianState{0, 0, 1, 1, 0}}, {0.25, 0.75});
  nlohmann::json gj = g;
  CHECK(gj.contains("weights"));
  CHECK(gj.contains("components"));
  CHECK(gmm_from_json(gj) == g);
}
