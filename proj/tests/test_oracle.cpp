#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rcsep/oracle.hpp"

using namespace rcsep;

namespace {

const Shape front = Shape::tanh_front(0.1, 0.9, 0, 0.25);

Environment small_env(std::uint64_t seed = 7, Boundary b = Boundary::frozen_buffer) {
  return Environment::generate(seed, DisorderLaw::uniform(0.25, 0.75), LatticeWindow{4, -4, 3, b}, 0.25);
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(MasterEquation, LawStaysNormalisedAndReservoirEquilibriumIsStationary) {
  const auto env = small_env();
  const auto me = master_equation(env, Shape::constant(0.3), {0, 0.1, 1.0});
  for (std::size_t k = 0; k < me.times.size(); ++k) {
    EXPECT_NEAR(std::accumulate(me.laws[k].begin(), me.laws[k].end(), 0.0), 1.0, 1e-12);
    for (double r : me.one_point_at(k)) EXPECT_NEAR(r, 0.3, 1e-12);
    for (double p : me.two_point_at(k)) EXPECT_NEAR(p, 0.0, 1e-12);
    EXPECT_NEAR(me.three_point_sup_at(k), 0.0, 1e-12);
  }
}

TEST(MasterEquation, DetailedBalanceOnRing) {
  const auto env = small_env(7, Boundary::periodic);
  const auto ch = MasterChain::build(env, 0, 0);
  EXPECT_LT(ch.detailed_balance_residual(0.4), 1e-12);
}

TEST(MasterEquation, RejectsLargeWindows) {
  const auto env = Environment::generate(1, DisorderLaw::uniform(0.25, 0.75), LatticeWindow{8, -8, 8, Boundary::frozen_buffer}, 0.25);
  EXPECT_THROW(master_equation(env, front, {0.1}), Error);
}

TEST(TwoPoint, Dopri5MatchesMasterEquation) {
  const auto env = small_env();
  const std::vector<double> g{0, 0.05, 0.1, 0.5};
  const auto me = master_equation(env, front, g);
  TwoPointOptions o;
  o.method = TwoPointOptions::Method::dopri5;
  const auto tp = two_point_ode(env, front, g, o);
  EXPECT_STREQ(tp.method, "dopri5");
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_LT(max_diff(me.two_point_at(k), tp.fields[k].values), 1e-9);
}

TEST(TwoPoint, AdiMatchesMasterEquation) {
  const auto env = small_env();
  const std::vector<double> g{0, 0.05, 0.1, 0.5};
  const auto me = master_equation(env, front, g);
  TwoPointOptions o;
  o.method = TwoPointOptions::Method::adi;
  const auto tp = two_point_ode(env, front, g, o);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_LT(max_diff(me.two_point_at(k), tp.fields[k].values), 1e-5);
}

TEST(TwoPoint, AdiStableAtLargeStiffness) {
  // N = 32 puts N^2 xi h_max well above one
  for (int N : {16, 32}) {
    const auto env = Environment::generate(20240601, DisorderLaw::uniform(0.25, 0.75),
                                           LatticeWindow::centered(N, 2.5, Boundary::frozen_buffer), 0.25);
    const std::vector<double> g{0.05, 0.25, 1.0};
    TwoPointOptions a, d;
    a.method = TwoPointOptions::Method::adi;
    d.method = TwoPointOptions::Method::dopri5;
    d.tol = 1e-9;
    const auto ra = two_point_ode(env, Shape::tanh_front(0.25, 0.75, 0, 1), g, a);
    const auto rd = two_point_ode(env, Shape::tanh_front(0.25, 0.75, 0, 1), g, d);
    for (std::size_t k = 0; k < g.size(); ++k) {
      EXPECT_LT(max_diff(ra.fields[k].values, rd.fields[k].values), 1e-7) << N;
      EXPECT_LT(ra.sup[k], 0.25);
    }
  }
}

TEST(TwoPoint, FlatProfileHasNoCorrelations) {
  const auto env = Environment::generate(3, DisorderLaw::uniform(0.25, 0.75),
                                         LatticeWindow::centered(8, 2, Boundary::frozen_buffer), 0.25);
  const auto tp = two_point_ode(env, Shape::constant(0.4), {0.1, 0.5});
  for (double s : tp.sup) EXPECT_LT(s, 1e-14);
}

TEST(TwoPoint, CheckedAgainstDiscreteTrajectory) {
  const auto env = small_env();
  const auto tr = solve_discrete(env, front, {0, 0.1, 0.3}, false);
  const auto tp = two_point_ode(env, front, tr);
  EXPECT_LT(tp.profile_mismatch, 1e-9);
  const auto starred = solve_discrete(env, front, {0, 0.1}, true);
  EXPECT_THROW(two_point_ode(env, front, starred), Error);
}

TEST(WalkKernel, UnitConductanceReturnProbabilityIsBessel) {
  const auto env = Environment::generate(1, DisorderLaw::constant(1), LatticeWindow{1, -60, 60, Boundary::frozen_buffer}, 0.25);
  const std::vector<double> g{0.5, 1, 2, 5};
  const auto K = walk_kernel(env, g);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(K.at(k, 0, 0), bessel_return_probability(g[k]), 1e-10);
}

TEST(WalkKernel, SymmetricAndSubstochastic) {
  const auto env = Environment::generate(4, DisorderLaw::uniform(0.25, 4), LatticeWindow{1, -80, 80, Boundary::frozen_buffer}, 0.25);
  const auto K = walk_kernel(env, {0.7, 3});
  for (std::size_t k = 0; k < 2; ++k)
    for (long x = -5; x <= 5; ++x)
      for (long y = -5; y <= 5; ++y) EXPECT_NEAR(K.at(k, x, y), K.at(k, y, x), 1e-13);
}

TEST(WalkKernel, EdgeMassIsReported) {
  const auto env = Environment::generate(4, DisorderLaw::uniform(0.25, 4), LatticeWindow{1, -5, 5, Boundary::frozen_buffer}, 0.25);
  EXPECT_THROW(walk_kernel(env, {50}), Error);
}

TEST(Nash, ConstantAndExponentWithinBounds) {
  const LatticeWindow w{16, -160, 160, Boundary::frozen_buffer};
  std::vector<double> fit, held;
  for (int i = 0; i < 20; ++i) fit.push_back(0.01 * std::pow(1000.0, i / 19.0));
  for (int i = 0; i < 19; ++i) held.push_back(std::sqrt(fit[std::size_t(i)] * fit[std::size_t(i + 1)]));
  std::vector<WalkKernel> F, H;
  for (int s = 0; s < 2; ++s) {
    const auto env = Environment::generate(100 + s, DisorderLaw::uniform(0.25, 4), w, 0.25);
    F.push_back(walk_kernel(env, fit));
    H.push_back(walk_kernel(env, held));
  }
  const auto r = nash_report(F, H, 0.25);
  EXPECT_TRUE(r.monotone);
  EXPECT_LE(r.heldout_max, r.C0);
  EXPECT_LE(r.C0, r.bound);
  // t <= 10 is still pre-asymptotic for the on-diagonal sup
  EXPECT_LT(r.exponent, -0.3);
  EXPECT_GT(r.exponent, -1.0);
  EXPECT_TRUE(r.pass);
}

TEST(LogLogFit, RecoversPowerLaw) {
  std::vector<double> x{1, 2, 4, 8}, y;
  for (double v : x) y.push_back(3 * std::pow(v, -0.5));
  const auto f = loglog_fit(x, y);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 3, 1e-12);
  EXPECT_THROW(loglog_fit({1}, {1}), Error);
}

TEST(Definite, ClassifiesPairFunctions) {
  EXPECT_TRUE(check_definite(nearest_neighbour_function(6), 6).ok);
  EXPECT_TRUE(check_definite(random_definite_function(6, 9), 6).ok);
  std::vector<double> f(36, 0.0);
  for (int i = 0; i < 6; ++i) f[std::size_t(i * 6 + i)] = -1;
  const auto r = check_definite(f, 6);
  EXPECT_FALSE(r.ok);
  EXPECT_NEAR(std::accumulate(r.direction.begin(), r.direction.end(), 0.0), 0.0, 1e-12);
}

TEST(Liggett, ExclusionDominatedByIndependentWalkers) {
  const auto env = small_env(5);
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto r = liggett_check(env, random_definite_function(8, s), {0, 0.05, 0.1, 0.5, 1}, 1e-12);
    EXPECT_TRUE(r.pass);
    EXPECT_GE(r.min_margin, -1e-12);
    EXPECT_LE(r.t0_mismatch, 1e-12);
  }
}

TEST(Liggett, RejectsIndefiniteFunction) {
  std::vector<double> f(64, 0.0);
  for (int i = 0; i < 8; ++i) f[std::size_t(i * 8 + i)] = -1;
  EXPECT_THROW(liggett_check(small_env(), f, {0.1}), Error);
}

TEST(Hitting, HarmonicFormulaMatchesMonteCarlo) {
  const auto env = Environment::generate(9, DisorderLaw::uniform(0.25, 0.75), LatticeWindow{1, -200, 200, Boundary::frozen_buffer}, 0.25);
  std::vector<double> g;
  for (int i = 0; i < 8; ++i) g.push_back(0.1 * std::pow(1000.0, i / 7.0));
  const auto h = hitting_and_coalescence(env, 5, -4, g, 20000, 42);
  EXPECT_NEAR(h.exact, -harmonic_coordinate(env, -4) / (harmonic_coordinate(env, 5) - harmonic_coordinate(env, -4)), 1e-14);
  EXPECT_LE(std::abs(h.mc - h.exact), 3 * h.mc_se);
  for (std::size_t i = 1; i < h.coal_tail.size(); ++i) EXPECT_LE(h.coal_tail[i], h.coal_tail[i - 1]);
}

TEST(Hitting, ConstantConductanceIsGamblersRuin) {
  const auto env = Environment::generate(9, DisorderLaw::constant(1), LatticeWindow{1, -50, 50, Boundary::frozen_buffer}, 0.25);
  const auto h = hitting_and_coalescence(env, 5, -4, {1.0}, 100, 1);
  EXPECT_NEAR(h.exact, 4.0 / 9.0, 1e-14);
  EXPECT_THROW(hitting_and_coalescence(env, -1, -4, {1.0}, 100, 1), Error);
}

TEST(SpaceTime, EqualTimesReproduceData) {
  const auto env = small_env();
  const double s = 0.1;
  const auto tr = solve_discrete(env, front, {0, s}, false);
  const auto tp = two_point_ode(env, front, std::vector<double>{s});
  const auto st = space_time_correlation(env, tr.profiles[1], tp.fields[0], 0, {s, 0.2, 0.5});
  const auto& w = env.window();
  for (long x = w.x_min; x <= w.x_max; ++x) {
    const double data = x == 0 ? tr.profiles[1].at(0) * (1 - tr.profiles[1].at(0)) : tp.fields[0].at(x, 0);
    EXPECT_NEAR(st.psi[0][std::size_t(w.index(x))], data, 1e-14);
  }
  EXPECT_LE(st.sup[2], st.sup[0] + 1e-14);
  EXPECT_THROW(space_time_correlation(env, tr.profiles[1], tp.fields[0], 0, {0.05}), Error);
}

TEST(SpaceTime, MatchesMasterEquationCovariance) {
  // Cov(eta_s(y), eta_t(x)) from the chain: E[eta_s(y) E[eta_t(x) | eta_s]] - rho_s(y) rho_t(x)
  const auto env = small_env();
  const double s = 0.05, t = 0.15;
  const auto me = master_equation(env, front, {s});
  const auto& w = env.window();
  const int K = int(w.sites());
  const long y = 0;
  const int iy = int(w.index(y));
  std::vector<double> cond = me.laws[0];
  for (std::uint32_t st = 0; st < cond.size(); ++st)
    if (!((st >> iy) & 1u)) cond[st] = 0;
  const double ry = me.one_point_at(0)[std::size_t(iy)];
  const auto later = master_equation(env, cond, me.chain.rho_left, me.chain.rho_right, {t - s});
  const auto full = master_equation(env, me.laws[0], me.chain.rho_left, me.chain.rho_right, {t - s});
  const auto joint = one_point(later.laws[0], K), rt = full.one_point_at(0);

  const auto tr = solve_discrete(env, front, {0, s}, false);
  const auto tp = two_point_ode(env, front, std::vector<double>{s});
  const auto sc = space_time_correlation(env, tr.profiles[1], tp.fields[0], y, {t});
  for (int i = 0; i < K; ++i)
    EXPECT_NEAR(sc.psi[0][std::size_t(i)], joint[std::size_t(i)] - ry * rt[std::size_t(i)], 1e-9) << i;
}
