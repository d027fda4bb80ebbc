#include <gtest/gtest.h>

#include <cmath>

#include "rcsep/oracle.hpp"
#include "rcsep/transform.hpp"

using namespace rcsep;

namespace {

const Shape bump = Shape::bump(1, 0, 1);

Environment env_of(int N, double A, const DisorderLaw& law, std::uint64_t seed = 3) {
  return Environment::generate(seed, law, LatticeWindow::centered(N, A, Boundary::frozen_buffer), 0.25);
}

DiscreteProfile flat_profile(const LatticeWindow& w, double a) {
  return {w, 0.0, std::vector<double>(std::size_t(w.sites()), a), false, 0.0};
}

}  // namespace

TEST(ApplyT, UnitConductanceIsIdentity) {
  const auto env = env_of(32, 2, DisorderLaw::constant(1));
  const auto G = sample(bump, env.window());
  const auto T = apply_T(env, G);
  for (long x = env.window().x_min; x <= env.window().x_max; ++x) EXPECT_NEAR(T.at(x), G.at(x), 1e-14);
  EXPECT_NEAR(T.total, 0.0, 1e-14);
}

TEST(ApplyT, ConstantConductanceScales) {
  const double c = 2.5;
  const auto env = env_of(32, 2, DisorderLaw::constant(c));
  const auto G = sample(bump, env.window());
  const auto T = apply_T(env, G);
  for (long x = env.window().x_min; x <= env.window().x_max; ++x) EXPECT_NEAR(T.at(x), G.at(x) / c, 1e-14);
  EXPECT_NEAR(T.total, 0.0, 1e-14);
}

TEST(ApplyT, RejectsSupportTouchingEdge) {
  const auto env = env_of(16, 1, DisorderLaw::uniform(0.5, 2));
  EXPECT_THROW(apply_T(env, sample(Shape::bump(1, 0, 1.5), env.window())), Error);
  const auto other = env_of(32, 2, DisorderLaw::uniform(0.5, 2));
  EXPECT_THROW(apply_T(env, sample(bump, other.window())), Error);
}

TEST(ApplyT, SummationByPartsIsExact) {
  const auto env = env_of(64, 2.5, DisorderLaw::uniform(0.25, 4));
  EXPECT_LT(summation_by_parts_residual(env, sample(bump, env.window())), 1e-11);
  EXPECT_LT(summation_by_parts_residual(env, sample(Shape::gaussian(1, 0.2, 0.25), env.window())), 1e-11);
}

TEST(ApplyT, QuarterPowerSupDistanceDecays) {
  const auto law = DisorderLaw::uniform(0.25, 4);
  std::vector<double> Ns, ds;
  for (int k = 8; k <= 14; k += 2) {
    const int N = 1 << k;
    double d = 0;
    for (int s = 0; s < 8; ++s) {
      const auto env = env_of(N, 1.25, law, 40 + s);
      const auto G = sample(bump, env.window());
      const auto T = apply_T(env, G);
      double sup = 0;
      for (long x = env.window().x_min; x <= env.window().x_max; ++x)
        sup = std::max(sup, std::abs(T.at(x) - env.gamma_hat() * G.at(x)));
      d += std::pow(double(N), 0.25) * sup / 8;
    }
    Ns.push_back(N);
    ds.push_back(d);
  }
  EXPECT_LT(loglog_fit(Ns, ds).slope, 0);
}

TEST(ApplyTl, RampCancelsItself) {
  const auto env = env_of(32, 3, DisorderLaw::uniform(0.25, 4));
  const double l = 1.5;
  const auto F = apply_Tl(env, sample(Shape::ramp(l), env.window()), l);
  EXPECT_NEAR(F.ratio, 1.0, 1e-14);
  for (long x = env.window().x_min; x <= env.window().x_max; ++x) EXPECT_NEAR(F.at(x), 0.0, 1e-13);
}

TEST(ApplyTl, VanishesLeftOfSupportAndMatchesDefinition) {
  const auto env = env_of(32, 3, DisorderLaw::uniform(0.25, 4));
  const auto G = sample(Shape::bump(1, 0.5, 0.5), env.window());
  const double l = 1;
  const auto F = apply_Tl(env, G, l);
  const auto T = apply_T(env, G);
  for (long x = env.window().x_min; x <= 0; ++x) EXPECT_EQ(F.at(x), 0.0) << x;
  for (long x = env.window().x_min; x <= 0; ++x) EXPECT_EQ(F.at(x), T.at(x));
  for (long x = long(l * 32); x <= env.window().x_max; ++x) EXPECT_NEAR(F.at(x), T.at(x) - T.total, 1e-13);
}

TEST(ApplyTl, RejectsNonPositiveOrOversizedCutoff) {
  const auto env = env_of(32, 2, DisorderLaw::uniform(0.25, 4));
  const auto G = sample(bump, env.window());
  EXPECT_THROW(apply_Tl(env, G, 0), Error);
  EXPECT_THROW(apply_Tl(env, G, 5), Error);
}

TEST(ApplyTl, L1DistanceShrinksUnderQuarterPowerCutoff) {
  const auto law = DisorderLaw::uniform(0.25, 4);
  const auto cut = parse_cutoff("quarter-power");
  std::vector<double> Ns, ds;
  for (int k = 8; k <= 14; k += 2) {
    const int N = 1 << k;
    const double l = cut.width(N);
    double d = 0;
    for (int s = 0; s < 8; ++s) {
      const auto env = env_of(N, l + 1.5, law, 70 + s);
      d += apply_Tl(env, sample(bump, env.window()), l).l1_distance / 8;
    }
    Ns.push_back(N);
    ds.push_back(d);
  }
  for (std::size_t i = 1; i < ds.size(); ++i) EXPECT_LT(ds[i], ds[i - 1]);
  EXPECT_LT(loglog_fit(Ns, ds).slope, 0);
}

TEST(Cutoff, Parsing) {
  EXPECT_EQ(parse_cutoff("quarter-power").kind, Cutoff::quarter_power);
  EXPECT_DOUBLE_EQ(parse_cutoff("quarter-power").width(16), 2.0);
  const auto f = parse_cutoff("fixed:0.75");
  EXPECT_EQ(f.kind, Cutoff::fixed);
  EXPECT_DOUBLE_EQ(f.width(1024), 0.75);
  EXPECT_THROW(parse_cutoff("fixed:-1"), Error);
  EXPECT_THROW(parse_cutoff("sometimes"), Error);
}

TEST(CorrectedFields, EmptyConfiguration) {
  const auto env = env_of(32, 3, DisorderLaw::uniform(0.25, 4));
  const auto& w = env.window();
  const auto F = apply_Tl(env, sample(bump, w), 1.0);
  Configuration c{w, std::vector<std::uint8_t>(std::size_t(w.sites()), 0), {}, 0, 0, 0};
  const auto rho = flat_profile(w, 0.3);
  const auto f = corrected_fields(F, c, &rho);
  EXPECT_EQ(f.X, 0.0);
  double s = 0;
  for (long x = w.x_min; x <= w.x_max; ++x) s += F.at(x) * 0.3;
  EXPECT_NEAR(f.Z, -s / (env.gamma_hat() * std::sqrt(32.0)), 1e-13);
}

TEST(CorrectedFields, UnitConductanceGivesEmpiricalMeasure) {
  const auto env = env_of(32, 3, DisorderLaw::constant(1));
  const auto& w = env.window();
  const auto G = sample(bump, w);
  const auto F = apply_Tl(env, G, 1.0);
  RandomStream rng(8);
  const auto c = init_configuration(env, Shape::constant(0.5), rng, false);
  double pi = 0;
  for (long x = w.x_min; x <= w.x_max; ++x) pi += G.at(x) * c.occupied(x);
  EXPECT_NEAR(corrected_fields(F, c).X, pi / 32, 1e-14);
}

TEST(CorrectedFields, ZIsRescaledYOfTransform) {
  const auto env = env_of(32, 3, DisorderLaw::uniform(0.25, 4));
  const auto& w = env.window();
  const auto F = apply_Tl(env, sample(bump, w), 1.0);
  RandomStream rng(8);
  const auto c = init_configuration(env, Shape::constant(0.4), rng, false);
  const auto rho = flat_profile(w, 0.4);
  GridFunction TG = F.base;
  TG.values = F.values;
  EXPECT_NEAR(corrected_fields(F, c, &rho).Z, fluctuation_field(TG, c, rho) / F.gamma, 1e-13);
  const auto other = env_of(16, 3, DisorderLaw::uniform(0.25, 4));
  RandomStream r2(1);
  EXPECT_THROW(corrected_fields(F, init_configuration(other, Shape::constant(0.4), r2, false)), Error);
}

TEST(CorrectedFields, PathwiseGapBounded) {
  const auto env = env_of(64, 3, DisorderLaw::uniform(0.25, 4));
  const auto F = apply_Tl(env, sample(Shape::gaussian(1, 0, 0.25), env.window()), 1.0);
  for (int r = 0; r < 50; ++r) {
    auto rng = replica_stream(4, std::uint64_t(r), 0);
    const auto c = init_configuration(env, Shape::tanh_front(0.1, 0.9), rng, false);
    const auto [gap, bound] = pathwise_gap(F, c);
    EXPECT_LE(gap, bound + 1e-14);
  }
}

TEST(CorrectedFields, ZMinusYShrinksUnderProductMeasure) {
  // Under nu_alpha, E[(Z - Y)^2] = alpha (1 - alpha) (1/N) sum (F/gamma - G)^2.
  const auto law = DisorderLaw::uniform(0.25, 4);
  const double a = 0.4;
  std::vector<double> mc, exact;
  for (int N : {128, 256, 512}) {
    const double l = std::pow(double(N), 0.25);
    const auto env = env_of(N, l + 1.5, law, 5);
    const auto& w = env.window();
    const auto G = sample(bump, w);
    const auto F = apply_Tl(env, G, l);
    const auto rho = flat_profile(w, a);
    double ex = 0;
    for (long x = w.x_min; x <= w.x_max; ++x) ex += std::pow(F.at(x) / F.gamma - G.at(x), 2);
    exact.push_back(a * (1 - a) * ex / N);
    double m = 0;
    const int M = 2000;
    for (int r = 0; r < M; ++r) {
      auto rng = replica_stream(11, std::uint64_t(r), 0);
      const auto c = init_configuration(env, Shape::constant(a), rng, false);
      const double d = corrected_fields(F, c, &rho).Z - fluctuation_field(G, c, rho);
      m += d * d / M;
    }
    mc.push_back(m);
    EXPECT_NEAR(m, exact.back(), 5 * exact.back() * std::sqrt(2.0 / M));
  }
  EXPECT_LT(exact[2], exact[0]);
  EXPECT_LT(mc[2], mc[0]);
}

TEST(Observables, MartingaleIntegrandsFollowSummationByParts) {
  const auto env = env_of(32, 3, DisorderLaw::uniform(0.25, 4));
  const auto& w = env.window();
  const auto F = apply_Tl(env, sample(bump, w), 1.0);
  const auto o = martingale_integrands("M", env, F);
  const double N = 32;
  // a(x) = (1/N) (Delta_N G - ratio Delta_N g_l) with Delta_N f(x) = N^2 (f(x+1) + f(x-1) - 2 f(x))
  const auto G = sample(bump, w), g = sample(Shape::ramp(1.0), w);
  for (long x = w.x_min; x <= w.x_max; ++x) {
    const double lap = N * (G.at(x + 1) + G.at(x - 1) - 2 * G.at(x)) -
                       F.ratio * N * (g.at(x + 1) + g.at(x - 1) - 2 * g.at(x));
    EXPECT_NEAR(o.site_weights[std::size_t(w.index(x))], lap, 1e-10);
  }
}
