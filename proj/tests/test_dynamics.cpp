#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "rcsep/dynamics.hpp"
#include "rcsep/stats.hpp"

using namespace rcsep;

namespace {

Environment elliptic(int N, double A, Boundary b = Boundary::frozen_buffer, std::uint64_t seed = 9) {
  return Environment::generate(seed, DisorderLaw::uniform(0.25, 4), LatticeWindow::centered(N, A, b), 0.25);
}

ObservableRequest full_request(const LatticeWindow& w, bool tagged) {
  ObservableRequest req;
  for (long b = w.x_min - 1; b <= w.x_max; ++b) req.current_bonds.push_back(b);
  req.snapshots = true;
  req.tagged = tagged;
  return req;
}

}  // namespace

TEST(InitConfiguration, FullProfileOccupiesEverySite) {
  const auto env = elliptic(8, 2);
  RandomStream rng(1);
  const auto c = init_configuration(env, Shape::constant(1), rng, false);
  EXPECT_EQ(c.particles(), env.window().sites());
  EXPECT_FALSE(c.tagged.has_value());
}

TEST(InitConfiguration, StarredEmptyProfileHasOneTaggedParticle) {
  const auto env = elliptic(8, 2);
  RandomStream rng(1);
  const auto c = init_configuration(env, Shape::constant(0), rng, true);
  EXPECT_EQ(c.particles(), 1);
  EXPECT_TRUE(c.occupied(0));
  ASSERT_TRUE(c.tagged.has_value());
  EXPECT_EQ(*c.tagged, 0);
}

TEST(InitConfiguration, BinomialCountWithinThreeSigma) {
  const auto env = elliptic(16, 2);
  const double a = 0.3;
  const double S = double(env.window().sites());
  int inside = 0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    auto rng = replica_stream(2024, std::uint64_t(s), 0);
    const auto c = init_configuration(env, Shape::constant(a), rng, false);
    inside += std::abs(double(c.particles()) - S * a) <= 3 * std::sqrt(S * a * (1 - a));
  }
  EXPECT_GE(inside, int(0.99 * seeds));
}

TEST(InitConfiguration, RejectsProfileOutsideUnitInterval) {
  const auto env = elliptic(8, 2);
  RandomStream rng(1);
  EXPECT_THROW(init_configuration(env, Shape::constant(1.5), rng, false), Error);
  EXPECT_THROW(init_configuration(env, Shape::tanh_front(-0.1, 0.5), rng, false), Error);
}

TEST(Simulate, FullConfigurationNeverMoves) {
  const auto env = elliptic(8, 2);
  RandomStream rng(1);
  auto c = init_configuration(env, Shape::constant(1), rng, true);
  for (Engine e : {Engine::stirring, Engine::rate_tree}) {
    Simulator sim(env, e);
    const auto s = simulate(sim, c, 1.0, {0.25, 0.5, 1.0}, full_request(env.window(), true), 3, 0);
    for (const auto& J : s.currents)
      for (long v : J) EXPECT_EQ(v, 0);
    for (long X : s.tagged) EXPECT_EQ(X, 0);
    for (const auto& snap : s.snapshots) EXPECT_EQ(snap, c.occupation);
  }
}

TEST(Simulate, SingleParticleVarianceIsTwoNSquaredT) {
  const int N = 4;
  const double t = 0.5;
  const auto env = Environment::generate(1, DisorderLaw::constant(1), LatticeWindow::centered(N, 12, Boundary::frozen_buffer), 0.25);
  RandomStream rng(1);
  const auto c = init_configuration(env, Shape::constant(0), rng, true);
  for (Engine e : {Engine::stirring, Engine::rate_tree}) {
    Simulator sim(env, e);
    ObservableRequest req;
    req.tagged = true;
    std::vector<double> X;
    for (int r = 0; r < 5000; ++r) X.push_back(double(sim.run(c, t, {t}, req, 17, std::uint64_t(r)).tagged[0]));
    const auto m = mean_estimate(X);
    std::vector<std::vector<double>> rows;
    for (double x : X) rows.push_back({x});
    const auto cov = estimate_covariance(rows, {"X"}, std::vector<std::uint64_t>(X.size(), 1), N);
    const double theory = 2.0 * N * N * t;
    EXPECT_LE(std::abs(m.value), 3 * m.se) << to_string(e);
    EXPECT_LE(std::abs(cov.cov[0][0] - theory), 3 * cov.cov_se[0][0]) << to_string(e);
  }
}

TEST(Simulate, EquilibriumDensityIsStationary) {
  const auto env = elliptic(8, 1, Boundary::frozen_buffer);
  const auto& w = env.window();
  const double alpha = 0.4;
  const std::vector<double> times{0.1, 0.5, 1.0};
  Simulator sim(env);
  ObservableRequest req;
  req.snapshots = true;
  const int M = 2000;
  std::vector<std::vector<double>> mean(times.size(), std::vector<double>(std::size_t(w.sites()), 0.0));
  for (int r = 0; r < M; ++r) {
    auto rng = replica_stream(55, std::uint64_t(r), 0);
    const auto c = init_configuration(env, Shape::constant(alpha), rng, false);
    const auto s = sim.run(c, 1.0, times, req, 55, std::uint64_t(r));
    for (std::size_t k = 0; k < times.size(); ++k)
      for (long i = 0; i < w.sites(); ++i) mean[k][std::size_t(i)] += s.snapshots[k][std::size_t(i)];
  }
  const double se = std::sqrt(alpha * (1 - alpha) / M);
  for (const auto& row : mean)
    for (double v : row) EXPECT_LE(std::abs(v / M - alpha), 3 * se);
}

TEST(Simulate, ParticleNumberConservedOnPeriodicWindow) {
  const auto env = elliptic(16, 1, Boundary::periodic);
  RandomStream rng(4);
  const auto c = init_configuration(env, Shape::tanh_front(0.1, 0.9, 0, 0.25), rng, false);
  Simulator sim(env);
  ObservableRequest req;
  req.snapshots = true;
  const auto s = sim.run(c, 0.5, {0.1, 0.2, 0.5}, req, 4, 0);
  for (const auto& snap : s.snapshots) {
    long n = 0;
    for (auto v : snap) n += v;
    EXPECT_EQ(n, c.particles());
  }
}

TEST(Simulate, DeterministicAndThreadIndependent) {
  const auto env = elliptic(16, 2);
  RandomStream rng(4);
  const auto c = init_configuration(env, Shape::tanh_front(0.25, 0.75), rng, true);
  Simulator sim(env);
  auto req = full_request(env.window(), true);
  req.event_log = true;
  const auto a = sim.run(c, 0.2, {0.1, 0.2}, req, 8, 3);
  const auto b = sim.run(c, 0.2, {0.1, 0.2}, req, 8, 3);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.currents, b.currents);
  EXPECT_EQ(a.tagged, b.tagged);

  auto batch = [&](int threads) {
    std::vector<long> out(12);
    for_each_replica(12, threads, [&](long r) { out[std::size_t(r)] = sim.run(c, 0.2, {0.2}, req, 8, std::uint64_t(r)).tagged[0]; });
    return out;
  };
  EXPECT_EQ(batch(1), batch(3));
}

TEST(Simulate, RejectsBadSampleTimes) {
  const auto env = elliptic(8, 2);
  RandomStream rng(1);
  const auto c = init_configuration(env, Shape::constant(0.5), rng, false);
  Simulator sim(env);
  EXPECT_THROW(sim.run(c, 1.0, {0.5, 0.2}, {}, 1, 0), Error);
  EXPECT_THROW(sim.run(c, 1.0, {2.0}, {}, 1, 0), Error);
}

TEST(Checks, CurrentConservationAndTaggedRelationOnRandomPaths) {
  for (Boundary bd : {Boundary::frozen_buffer, Boundary::periodic}) {
    const auto env = elliptic(8, 2, bd);
    Simulator sim(env);
    for (int r = 0; r < 50; ++r) {
      auto rng = replica_stream(99, std::uint64_t(r), 0);
      const auto c = init_configuration(env, Shape::tanh_front(0.2, 0.8, 0, 0.5), rng, true);
      const auto s = sim.run(c, 0.3, {0, 0.05, 0.1, 0.3}, full_request(env.window(), true), 99, std::uint64_t(r));
      EXPECT_TRUE(current_conservation_check(s, env.window()).pass());
      if (bd == Boundary::frozen_buffer && !s.tagged_lost) {
        EXPECT_TRUE(tagged_vs_current_check(s).pass());
      }
    }
  }
}

TEST(Checks, EventLogReplayReproducesSnapshots) {
  const auto env = elliptic(4, 2);
  RandomStream rng(3);
  const auto c = init_configuration(env, Shape::constant(0.5), rng, false);
  Simulator sim(env);
  auto req = full_request(env.window(), false);
  req.event_log = true;
  const auto s = sim.run(c, 0.2, {0.2}, req, 1, 0);
  EXPECT_EQ(replay_events(s, s.events.size()), s.snapshots[0]);
}

TEST(Checks, ConservationViolationIsReported) {
  const auto env = elliptic(4, 2);
  RandomStream rng(3);
  const auto c = init_configuration(env, Shape::constant(0.5), rng, false);
  Simulator sim(env);
  auto s = sim.run(c, 0.2, {0.2}, full_request(env.window(), false), 1, 0);
  s.currents[3][0] += 1;
  EXPECT_THROW(current_conservation_check(s, env.window()), Error);
}

// The mirrored relation for n <= 0 written as -J >= sum_{x=-n}^{-1} eta fails on a
// reachable configuration: one particle crossed leftwards, the tagged particle sits at
// -1 and site -2 is empty. The strict form used by the checker holds there.
TEST(Checks, MirroredRelationNeedsStrictInequality) {
  const LatticeWindow w{2, -2, 2, Boundary::frozen_buffer};
  ObservableSeries s;
  s.window = w;
  s.sample_times = {1.0};
  s.current_bonds = {-1};
  s.currents = {{-1}};
  s.tagged = {-1};
  s.snapshots = {{0, 1, 0, 0, 0}};  // sites -2..2
  EXPECT_TRUE(tagged_vs_current_check(s).pass());

  const long n = 2, X = -1, J = -1;
  const long sum = s.snapshots[0][0] + s.snapshots[0][1];  // eta(-2) + eta(-1)
  EXPECT_NE(X <= -n, -J >= sum);
}

TEST(Checks, SingleParticleRelationMatchesReplay) {
  const auto env = elliptic(4, 3);
  RandomStream rng(1);
  const auto c = init_configuration(env, Shape::constant(0), rng, true);
  Simulator sim(env);
  auto req = full_request(env.window(), true);
  for (int r = 0; r < 200; ++r) {
    const auto s = sim.run(c, 0.5, {0.1, 0.5}, req, 5, std::uint64_t(r));
    if (s.tagged_lost) continue;
    EXPECT_TRUE(tagged_vs_current_check(s).pass());
    for (std::size_t k = 0; k < 2; ++k) {
      // the lone particle's displacement sign equals the net crossing of bond (-1,0)
      const long X = s.tagged[k];
      EXPECT_EQ(s.currents[0 + std::size_t(-1 - (env.window().x_min - 1))][k], X >= 0 ? 0 : -1);
    }
  }
}

TEST(Reversibility, DetailedBalanceOnTinyRing) {
  const LatticeWindow w{2, -2, 3, Boundary::periodic};
  const auto env = Environment::generate(12, DisorderLaw::uniform(0.5, 2), w, 0.25);
  Simulator sim(env);
  ObservableRequest req;
  req.event_log = true;
  const long S = w.sites();
  std::map<std::pair<unsigned, unsigned>, long> count;
  for (int r = 0; r < 40; ++r) {
    auto rng = replica_stream(6, std::uint64_t(r), 0);
    const auto c = init_configuration(env, Shape::constant(0.5), rng, false);
    const auto s = sim.run(c, 20.0, {20.0}, req, 6, std::uint64_t(r));
    std::vector<std::uint8_t> e(std::size_t(S + 2), 0);
    std::copy(c.occupation.begin(), c.occupation.end(), e.begin() + 1);
    auto code = [&] {
      unsigned v = 0;
      for (long i = 1; i <= S; ++i) v |= unsigned(e[std::size_t(i)]) << (i - 1);
      return v;
    };
    unsigned cur = code();
    for (auto ev : s.events) {
      const std::size_t j = ev >> 1;
      const std::size_t k = j == std::size_t(S) ? 1 : j + 1;
      std::swap(e[j], e[k]);
      const unsigned next = code();
      if (next != cur) ++count[{cur, next}];
      cur = next;
    }
  }
  ASSERT_GT(count.size(), 20u);
  for (const auto& [k, n] : count) {
    const long back = count.count({k.second, k.first}) ? count.at({k.second, k.first}) : 0;
    EXPECT_LE(std::abs(double(n - back)), 4 * std::sqrt(double(n + back))) << k.first << "->" << k.second;
  }
}
