#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rcsep/stats.hpp"

using namespace rcsep;

namespace {

std::vector<double> gaussians(std::uint64_t seed, std::size_t M, double sd) {
  RandomStream rng(seed);
  std::normal_distribution<double> n(0, sd);
  std::vector<double> x(M);
  for (auto& v : x) v = n(rng);
  return x;
}

}  // namespace

TEST(Estimates, MeanAndJackknifeAgreeForTheMean) {
  const auto x = gaussians(3, 500, 2.0);
  const auto m = mean_estimate(x);
  std::vector<std::vector<double>> contrib;
  for (double v : x) contrib.push_back({v});
  const auto j = jackknife(contrib, [](const std::vector<double>& s, double n) { return s[0] / n; });
  EXPECT_NEAR(j.value, m.value, 1e-13);
  EXPECT_NEAR(j.se, m.se, 1e-12);
  EXPECT_NEAR(m.se, 2.0 / std::sqrt(500.0), 0.02);
  EXPECT_THROW(mean_estimate({1.0}), Error);
}

TEST(Estimates, CovarianceOfCorrelatedPair) {
  // (a, a + b) with a, b independent N(0,1): covariance [[1,1],[1,2]]
  RandomStream rng(12);
  std::normal_distribution<double> n;
  const std::size_t M = 20000;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < M; ++i) {
    const double a = n(rng), b = n(rng);
    rows.push_back({a, a + b});
  }
  const auto c = estimate_covariance(rows, {"a", "ab"}, std::vector<std::uint64_t>(M, 5), 64);
  EXPECT_EQ(c.env_seed, 5u);
  EXPECT_EQ(c.index("ab"), 1u);
  EXPECT_THROW(c.index("nope"), Error);
  const double want[2][2] = {{1, 1}, {1, 2}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      EXPECT_GT(c.cov_se[i][j], 0.0);
      EXPECT_LE(std::abs(c.cov[i][j] - want[i][j]), 4 * c.cov_se[i][j]);
    }
  // Var of the sample variance of N(0,1) is about 2/M
  EXPECT_NEAR(c.cov_se[0][0], std::sqrt(2.0 / M), 0.2 * std::sqrt(2.0 / M));
}

TEST(Estimates, CovarianceJackknifeMatchesGenericJackknife) {
  RandomStream rng(99);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> rows, contrib;
  for (int i = 0; i < 40; ++i) {
    const double a = n(rng), b = 0.5 * a + n(rng);
    rows.push_back({a, b});
    contrib.push_back({a, b, a * b});
  }
  const auto c = estimate_covariance(rows, {"a", "b"}, std::vector<std::uint64_t>(40, 1), 16);
  const auto j = jackknife(contrib, [](const std::vector<double>& s, double n) {
    return (s[2] - s[0] * s[1] / n) / (n - 1);
  });
  EXPECT_NEAR(c.cov[0][1], j.value, 1e-13);
  EXPECT_NEAR(c.cov_se[0][1], j.se, 1e-12);
}

TEST(Estimates, RefusesToPoolEnvironmentSeeds) {
  const std::vector<std::vector<double>> rows{{1}, {2}, {3}};
  EXPECT_THROW(estimate_covariance(rows, {"x"}, {1, 1, 2}, 16), Error);
  EXPECT_THROW(estimate_covariance(rows, {"x"}, {1, 1}, 16), Error);
  EXPECT_THROW(estimate_covariance(rows, {"x", "y"}, {1, 1, 1}, 16), Error);
}

TEST(ShapeTest, GaussianSamplesUsuallyPass) {
  int passed = 0;
  for (std::uint64_t s = 0; s < 20; ++s) passed += clt_shape_test(gaussians(100 + s, 4000, 1.5), 2.25).pass;
  EXPECT_GE(passed, 17);
}

TEST(ShapeTest, DetectsWrongVarianceAndWrongShape) {
  EXPECT_FALSE(clt_shape_test(gaussians(1, 5000, 1.0), 2.0).pass);
  RandomStream rng(2);
  std::vector<double> u(5000);
  for (auto& v : u) v = std::sqrt(12.0) * (rng.uniform() - 0.5);
  const auto r = clt_shape_test(u, 1.0);
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.excess_kurtosis, -1.2, 5 * r.kurtosis_se);
}

TEST(ShapeTest, LatticeJitterCorrectsIntegerSamples) {
  // Binomial(400, 1/2) is integer valued with variance 100
  RandomStream rng(4);
  std::vector<double> x(5000);
  for (auto& v : x) {
    int k = 0;
    for (int i = 0; i < 400; ++i) k += rng.uniform() < 0.5;
    v = k;
  }
  EXPECT_TRUE(clt_shape_test(x, 100, 1.0).pass);
}

TEST(ShapeTest, RejectsSmallSamples) {
  EXPECT_THROW(clt_shape_test(gaussians(1, 1999, 1), 1), Error);
  EXPECT_THROW(clt_shape_test(gaussians(1, 2000, 1), 0), Error);
}

TEST(ShapeTest, KolmogorovTail) {
  EXPECT_NEAR(kolmogorov_tail(1.3581), 0.05, 1e-3);
  EXPECT_NEAR(kolmogorov_tail(1.6276), 0.01, 1e-3);
  EXPECT_EQ(kolmogorov_tail(0.1), 1.0);
}

TEST(Theory, EquilibriumDensityCovarianceIsStationary) {
  const double gamma = 1.4, a = 0.3, w = 0.25, tau = 0.2;
  const Shape G = Shape::gaussian(1, 0, w);
  const double chi = a * (1 - a);
  const auto same = theory_density_covariance(gamma, Shape::constant(a), 0.3, 0.3, G, G);
  EXPECT_NEAR(same.value, chi * w * std::sqrt(M_PI), 1e-7);
  // s < t: chi int G T_{t-s} G
  const double v = w * w + 2 * tau / gamma;
  const double lagged = chi * std::sqrt(2 * M_PI) * (w / std::sqrt(v)) / std::sqrt(1 / (w * w) + 1 / v);
  EXPECT_NEAR(theory_density_covariance(gamma, Shape::constant(a), 0.3, 0.3 + tau, G, G).value, lagged, 1e-7);
}

TEST(Theory, DensityCovarianceMatrixIsPositive) {
  const double gamma = 2.0;
  const Shape rho = Shape::tanh_front(0.25, 0.75, 0, 1);
  const Shape G = Shape::gaussian(1, -0.3, 0.3), H = Shape::gaussian(1, 0.4, 0.2);
  const double gg = theory_density_covariance(gamma, rho, 0.4, 0.4, G, G).value;
  const double hh = theory_density_covariance(gamma, rho, 0.4, 0.4, H, H).value;
  const double gh = theory_density_covariance(gamma, rho, 0.4, 0.4, G, H).value;
  const double hg = theory_density_covariance(gamma, rho, 0.4, 0.4, H, G).value;
  EXPECT_NEAR(gh, hg, 1e-9);
  EXPECT_GT(gg, 0);
  EXPECT_GT(gg * hh - gh * gh, 0);
}

TEST(Theory, CurrentCovarianceDirectAndDualAgree) {
  const double gamma = std::log(3.0) / 0.5;
  const Shape rho = Shape::tanh_front(0.25, 0.75, 0, 1);
  const auto d = theory_current_covariance(gamma, rho, 0.25, 0.5);
  const auto u = theory_current_covariance_dual(gamma, rho, 0.25, 0.5);
  EXPECT_GT(d.value, 0);
  EXPECT_NEAR(d.value, u.value, 1e-4 * d.value + u.error);
}

TEST(Theory, FlatTaggedIsCurrentOverDensitySquared) {
  const double a = 0.6;
  const auto w = theory_tagged_covariance(0.9, Shape::constant(a), 0.1, 0.4);
  const auto j = theory_current_covariance(0.9, Shape::constant(a), 0.1, 0.4);
  EXPECT_NEAR(w.value, j.value / (a * a), 1e-10);
}

TEST(Theory, RejectsBadTimesAndVacuum) {
  const Shape rho = Shape::tanh_front(0.25, 0.75, 0, 1);
  EXPECT_THROW(theory_current_covariance(1, rho, 0.5, 0.2), Error);
  EXPECT_THROW(theory_density_covariance(1, rho, -0.1, 0.2, Shape::bump(1, 0, 1), Shape::bump(1, 0, 1)), Error);
  EXPECT_THROW(theory_tagged_covariance(1, Shape::constant(0), 0.1, 0.2), Error);
}
