#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rcsep/oracle.hpp"
#include "rcsep/pde.hpp"

using namespace rcsep;

namespace {

Environment env_of(int N, double A, Boundary b = Boundary::frozen_buffer, std::uint64_t seed = 21) {
  return Environment::generate(seed, DisorderLaw::uniform(0.25, 4), LatticeWindow::centered(N, A, b), 0.25);
}

const Shape front = Shape::tanh_front(0.1, 0.9, 0, 0.25);

}  // namespace

TEST(Discrete, ConstantProfileIsStationary) {
  const auto env = env_of(32, 2);
  const auto tr = solve_discrete(env, Shape::constant(0.3), {0, 0.1, 1.0}, false);
  for (const auto& p : tr.profiles)
    for (double v : p.values) EXPECT_NEAR(v, 0.3, 1e-12);
  EXPECT_NEAR(tr.profiles.back().flux, 0.0, 1e-10);
}

TEST(Discrete, MaximumPrincipleAndPeriodicMass) {
  const auto env = env_of(32, 1, Boundary::periodic);
  const auto tr = solve_discrete(env, front, {0, 0.01, 0.1, 0.5}, false);
  const double m0 = std::accumulate(tr.profiles[0].values.begin(), tr.profiles[0].values.end(), 0.0);
  for (const auto& p : tr.profiles) {
    EXPECT_NEAR(std::accumulate(p.values.begin(), p.values.end(), 0.0), m0, 1e-9);
    for (double v : p.values) {
      EXPECT_GE(v, tr.min0 - 1e-12);
      EXPECT_LE(v, tr.max0 + 1e-12);
    }
  }
}

TEST(Discrete, UniformizationAgreesWithRungeKutta) {
  const auto env = env_of(16, 2);
  const std::vector<double> g{0, 0.05, 0.2};
  const auto a = solve_discrete(env, front, g, true, DiscreteMethod::uniformization);
  const auto b = solve_discrete(env, front, g, true, DiscreteMethod::explicit_rk4);
  for (std::size_t k = 0; k < g.size(); ++k) {
    for (std::size_t i = 0; i < a.profiles[k].values.size(); ++i)
      EXPECT_NEAR(a.profiles[k].values[i], b.profiles[k].values[i], 1e-9);
    EXPECT_NEAR(a.profiles[k].flux, b.profiles[k].flux, 1e-8);
  }
}

TEST(Discrete, MatchesMasterEquationDensityAndCurrent) {
  const LatticeWindow w{4, -4, 3, Boundary::frozen_buffer};
  const auto env = Environment::generate(7, DisorderLaw::uniform(0.25, 0.75), w, 0.25);
  const std::vector<double> g{0, 0.05, 0.1, 0.5};
  const auto me = master_equation(env, front, g);
  const auto ds = solve_discrete(env, front, g, false);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto r = me.one_point_at(k);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], ds.profiles[k].values[i], 1e-10);
    // mean current across bond (-1, 0): bond index -1 - (x_min - 1)
    EXPECT_NEAR(me.mean_currents[k][std::size_t(-1 - (w.x_min - 1))], ds.profiles[k].flux, 1e-9);
  }
}

TEST(Discrete, StarredProfileStartsAtOne) {
  const auto env = env_of(16, 2);
  const auto tr = solve_discrete(env, Shape::constant(0.4), {0, 0.1}, true);
  EXPECT_EQ(tr.profiles[0].at(0), 1.0);
  EXPECT_TRUE(tr.profiles[0].starred);
  EXPECT_LT(tr.profiles[1].at(0), 1.0);
  EXPECT_GT(tr.profiles[1].at(0), 0.4);
}

TEST(Discrete, RejectsBadGrid) {
  const auto env = env_of(16, 2);
  EXPECT_THROW(solve_discrete(env, front, {0.1, 0.05}, false), Error);
  EXPECT_THROW(solve_discrete(env, Shape::constant(1.2), {0.1}, false), Error);
}

TEST(Discrete, ConvergesToHeatEquationForConstantConductance) {
  // xi = c gives gamma = 1/c and rho_t(x) -> T_t rho0(x/N) with variance 2t/gamma.
  const double c = 2.0, t = 0.1;
  const Shape r0 = Shape::tanh_front(0.2, 0.8, 0, 0.5);
  double prev = 1;
  for (int N : {16, 64, 256}) {
    const auto env = Environment::generate(1, DisorderLaw::constant(c), LatticeWindow::centered(N, 3, Boundary::frozen_buffer), 0.25);
    const auto tr = solve_discrete(env, r0, {t}, false);
    double err = 0;
    for (long x = -N; x <= N; ++x)
      err = std::max(err, std::abs(tr.profiles[0].at(x) - heat_apply(r0, t, 1 / c, double(x) / N).value));
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Heat, GaussianClosedForm) {
  const double gamma = 0.8, w = 0.3;
  const auto sol = solve_heat(gamma, Shape::gaussian(0.5, 0, w, 0.2), {0, 0.1, 0.5}, {0.0, 0.25});
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    const double v = w * w + 2 * sol.times[k] / gamma;
    EXPECT_NEAR(sol.rho[k][0], 0.2 + 0.5 * w / std::sqrt(v), 1e-12);
    EXPECT_NEAR(sol.rho[k][1], 0.2 + 0.5 * w / std::sqrt(v) * std::exp(-0.5 * 0.0625 / v), 1e-12);
  }
}

TEST(Heat, TanhQuadratureSatisfiesEquation) {
  // d/dt rho = gamma^{-1} d^2/du^2 rho checked by finite differences
  const double gamma = 1.3, t = 0.2, u = 0.1, h = 1e-3;
  const Shape r0 = Shape::tanh_front(0.25, 0.75, 0, 1);
  const double dt = (heat_apply(r0, t + h, gamma, u).value - heat_apply(r0, t - h, gamma, u).value) / (2 * h);
  const double duu = (heat_gradient(r0, t, gamma, u + h).value - heat_gradient(r0, t, gamma, u - h).value) / (2 * h);
  EXPECT_NEAR(dt, duu / gamma, 1e-6);
}

TEST(Heat, RejectsNonPositiveGamma) { EXPECT_THROW(solve_heat(0, front, {0.1}, {0.0}), Error); }

TEST(Centering, OdeAndIntegralFormsAgree) {
  const double gamma = std::log(3.0) / 0.5;
  const auto r = compute_ut(gamma, Shape::tanh_front(0.25, 0.75, 0, 1), {0, 0.1, 0.25, 0.5});
  EXPECT_EQ(r.u_ode[0], 0.0);
  EXPECT_LT(r.max_discrepancy, 1e-6);
  EXPECT_GT(r.u_ode.back(), 0.0);
}

TEST(Centering, FlatProfileStaysPut) {
  const auto r = compute_ut(1.0, Shape::constant(0.5), {0.1, 1.0});
  for (double u : r.u_ode) EXPECT_NEAR(u, 0.0, 1e-12);
}

TEST(Centering, IntegerCenteringFromPartialSums) {
  const LatticeWindow w{4, -8, 8, Boundary::frozen_buffer};
  DiscreteProfile p{w, 1.0, std::vector<double>(std::size_t(w.sites()), 0.5), true, 0.0};
  EXPECT_EQ(compute_utN(p), 0);
  p.flux = 1.2;  // S(1) = 1.0 <= 1.2 < 1.5 = S(2)
  EXPECT_EQ(compute_utN(p), 2);
  p.flux = -0.7;  // S(-3) = -1.0 <= -0.7 < -0.5 = S(-2)
  EXPECT_EQ(compute_utN(p), -2);
  p.flux = 100;
  EXPECT_THROW(compute_utN(p), Error);
}

TEST(Centering, DiscreteTracksContinuumForConstantConductance) {
  const double c = 1.0, t = 0.25;
  const int N = 128;
  const Shape r0 = Shape::tanh_front(0.25, 0.75, 0, 1);
  const auto env = Environment::generate(1, DisorderLaw::constant(c), LatticeWindow::centered(N, 4, Boundary::frozen_buffer), 0.25);
  const auto tr = solve_discrete(env, r0, {t}, true);
  const auto u = compute_ut(1 / c, r0, {t});
  EXPECT_NEAR(double(compute_utN(tr.profiles[0])) / N, u.u_ode[0], 3.0 / N);
}

TEST(GradientBound, HoldsOnEllipticEnvironment) {
  const auto env = env_of(64, 2);
  const auto tr = solve_discrete(env, front, {0.001, 0.01, 0.1, 0.5}, false);
  const auto r = gradient_bound_check(env, tr);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.observed_ratio, r.bound_ratio);
  EXPECT_LE(r.h_max, r.h_initial + 1e-9);
}
