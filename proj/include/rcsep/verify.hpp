#pragma once

#include <chrono>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rcsep/experiments.hpp"

namespace rcsep {

struct CriterionResult {
  std::string id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;

  CriterionResult() = default;
  CriterionResult(std::string i, std::string n) : id(std::move(i)), name(std::move(n)) {}
};

/// Pinned seeds of the acceptance runs.
struct AcceptanceSeeds {
  static constexpr std::uint64_t env = 20240601;
  static constexpr std::uint64_t mc = 77;
};

namespace acceptance {

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

inline std::string pm(double v, double se) { return fmt(v, 6) + " +- " + fmt(se, 2); }

inline const std::vector<double>& mc_times() {
  static const std::vector<double> t = {0.0, 0.1, 0.25, 0.5};
  return t;
}

inline Shape tanh_profile() { return Shape::tanh_front(0.25, 0.75, 0, 1); }
inline Shape steep_profile() { return Shape::tanh_front(0.1, 0.9, 0, 0.25); }
inline DisorderLaw mc_law() { return DisorderLaw::uniform(0.25, 0.75); }
inline DisorderLaw wide_law() { return DisorderLaw::uniform(0.25, 4.0); }
inline Shape field_test() { return Shape::gaussian(1, 0, 0.25); }
constexpr double alpha_eq = 0.4;

inline std::vector<std::pair<std::string, Shape>> hydro_tests() {
  return {{"G1", Shape::bump(1, -0.5, 0.5)}, {"G2", Shape::bump(1, 0, 0.5)}, {"G3", Shape::gaussian(1, 0.5, 0.25)}};
}

inline EnsembleSpec base_spec(int N, long M, const Shape& profile, bool starred, std::uint64_t purpose) {
  EnsembleSpec s;
  s.N = N;
  s.M = M;
  s.T = 0.5;
  s.times = mc_times();
  s.profile = profile;
  s.law = mc_law();
  s.env_seed = AcceptanceSeeds::env;
  s.master_seed = hash_combine(AcceptanceSeeds::mc, purpose);
  s.starred = starred;
  return s;
}

/// Equilibrium ensemble at density alpha: fields and currents.
inline const Ensemble& equilibrium_ensemble() {
  auto s = base_spec(256, 5000, Shape::constant(alpha_eq), false, 1);
  s.fields = {{"G", field_test()}};
  return run_ensemble(s);
}

/// Out-of-equilibrium ensemble from the tanh front.
inline const Ensemble& front_ensemble() {
  auto s = base_spec(256, 5000, tanh_profile(), false, 2);
  s.fields = {{"G", field_test()}};
  return run_ensemble(s);
}

inline const Ensemble& tagged_ensemble() { return run_ensemble(base_spec(256, 5000, tanh_profile(), true, 3)); }

// ---- criteria ---------------------------------------------------------------------

inline CriterionResult closure() {
  CriterionResult r{"1", "closure: master equation vs discrete equation, K = 8"};
  const auto env = small_segment(AcceptanceSeeds::env, wide_law(), 8);
  const std::vector<double> grid = {0.0, 0.05, 0.1, 0.5};
  const auto me = master_equation(env, steep_profile(), grid);
  const auto ds = solve_discrete(env, steep_profile(), grid, false);
  double d = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto p = me.one_point_at(k);
    for (std::size_t i = 0; i < p.size(); ++i) d = std::max(d, std::abs(p[i] - ds.profiles[k].values[i]));
  }
  r.pass = d <= 1e-8;
  r.detail = "max |diff| " + fmt(d, 3) + " (tol 1e-8)";
  return r;
}

inline CriterionResult two_point_oracle() {
  CriterionResult r{"2", "two-point equation vs exact master-equation correlations, K = 8"};
  const auto env = small_segment(AcceptanceSeeds::env, wide_law(), 8);
  const std::vector<double> grid = {0.0, 0.05, 0.1, 0.5};
  const auto me = master_equation(env, steep_profile(), grid);
  const auto tp = two_point_ode(env, steep_profile(), grid);
  TwoPointOptions adi;
  adi.method = TwoPointOptions::Method::adi;
  const auto ta = two_point_ode(env, steep_profile(), grid, adi);
  double d = 0, da = 0, sup = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto f = me.two_point_at(k);
    for (std::size_t i = 0; i < f.size(); ++i) {
      d = std::max(d, std::abs(f[i] - tp.fields[k].values[i]));
      da = std::max(da, std::abs(f[i] - ta.fields[k].values[i]));
      sup = std::max(sup, std::abs(f[i]));
    }
  }
  r.pass = d <= 1e-6;
  r.detail = "max |diff| " + fmt(d, 3) + " (" + tp.method + "), ADI " + fmt(da, 3) + ", sup|phi| " + fmt(sup, 3);
  return r;
}

inline CriterionResult correlation_decay() {
  CriterionResult r{"3", "sup |phi| scales like 1/N"};
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(0.05 * i);
  const auto s = correlation_scaling({64, 128, 256, 512}, tanh_profile(), mc_law(), 0.25, AcceptanceSeeds::env, 2.5, grid);
  r.pass = s.fit.slope >= -1.15 && s.fit.slope <= -0.85;
  std::ostringstream os;
  os << "slope " << fmt(s.fit.slope) << " in [-1.15, -0.85]; N sup|phi|:";
  for (std::size_t i = 0; i < s.Ns.size(); ++i) os << ' ' << fmt(s.Ns[i] * s.sups[i]);
  r.detail = os.str();
  return r;
}

inline CriterionResult hydrodynamics() {
  CriterionResult r{"4", "hydrodynamic limit, N = 256, M = 200"};
  auto spec = base_spec(256, 200, tanh_profile(), false, 4);
  spec.densities = hydro_tests();
  spec.current = false;
  const auto& e = run_ensemble(spec);
  const double gamma = mc_law().mean_inverse();
  r.pass = true;
  double worst = 0;
  for (double t : {0.1, 0.5})
    for (const auto& [n, G] : spec.densities) {
      const auto m = mean_estimate(e.linear("pi:" + n, t));
      const auto th = heat_pairing(gamma, tanh_profile(), t, G);
      const auto c = within(n, m.value, m.se, th.value, 3, 0.01, th.error);
      r.pass = r.pass && c.pass;
      worst = std::max(worst, std::abs(m.value - th.value) / c.tolerance);
    }
  r.pass = r.pass && e.seconds < 600;
  r.detail = "worst |error| / tolerance " + fmt(worst, 3) + ", runtime " + fmt(e.seconds, 3) + " s";
  return r;
}

struct TransformDecay {
  std::vector<int> Ns;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> l1;  // [seed][N]
  std::vector<double> slopes, mean;
};

inline TransformDecay transform_decay(const std::vector<std::uint64_t>& seeds) {
  TransformDecay d;
  for (int p = 8; p <= 13; ++p) d.Ns.push_back(1 << p);
  d.seeds = seeds;
  const Shape G = Shape::bump(1, 0, 1);
  d.mean.assign(d.Ns.size(), 0.0);
  for (auto seed : seeds) {
    std::vector<double> row;
    for (std::size_t i = 0; i < d.Ns.size(); ++i) {
      const auto env = Environment::generate(seed, mc_law(), LatticeWindow::centered(d.Ns[i], 2.0, Boundary::frozen_buffer));
      row.push_back(apply_Tl(env, sample(G, env.window()), 1.0).l1_distance);
      d.mean[i] += row.back() / double(seeds.size());
    }
    std::vector<double> x(d.Ns.begin(), d.Ns.end());
    d.slopes.push_back(loglog_fit(x, row).slope);
    d.l1.push_back(row);
  }
  return d;
}

inline CriterionResult transform_quality() {
  CriterionResult r{"5", "transform l1 distance decreases in N"};
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 16; ++i) seeds.push_back(hash_combine(AcceptanceSeeds::env, 500 + i));
  const auto d = transform_decay(seeds);
  bool ok = true;
  for (double s : d.slopes) ok = ok && s < 0;
  bool mono = true;
  for (std::size_t i = 1; i < d.mean.size(); ++i) mono = mono && d.mean[i] < d.mean[i - 1];
  r.pass = ok && mono;
  std::ostringstream os;
  os << "16 seeds, max per-seed slope " << fmt(*std::max_element(d.slopes.begin(), d.slopes.end()), 3);
  os << "; seed-mean l1";
  for (double m : d.mean) os << ' ' << fmt(m, 3);
  r.detail = os.str();
  return r;
}

inline CriterionResult equilibrium_variance() {
  CriterionResult r{"6", "equilibrium field variance, N = 256, M = 5000"};
  const auto& e = equilibrium_ensemble();
  const double theory = alpha_eq * (1 - alpha_eq) * integral_of_square(field_test());
  r.pass = true;
  std::ostringstream os;
  for (double t : {0.0, 0.5}) {
    const auto v = variance_estimate(e.linear("Y:G", t));
    const auto c = within("", v.value, v.se, theory, 3);
    r.pass = r.pass && c.pass;
    os << "t=" << t << ": " << pm(v.value, v.se) << "; ";
  }
  os << "theory " << fmt(theory, 6);
  r.detail = os.str();
  return r;
}

inline CriterionResult density_covariance() {
  CriterionResult r{"7", "density covariance (s,t) = (0.25, 0.5), N = 256, M = 5000"};
  const auto& e = front_ensemble();
  const auto th = theory_density_covariance(mc_law().mean_inverse(), tanh_profile(), 0.25, 0.5, field_test(), field_test());
  const auto mc = covariance_estimate(e.linear("Y:G", 0.25), e.linear("Y:G", 0.5));
  const auto c = within("", mc.value, mc.se, th.value, 3, 0, th.error);
  r.pass = c.pass;
  r.detail = "MC " + pm(mc.value, mc.se) + ", theory " + fmt(th.value, 6) + " (quad err " + fmt(th.error, 2) + ")";
  return r;
}

inline CriterionResult current_lln() {
  CriterionResult r{"8", "current law of large numbers, N = 512, M = 500"};
  auto spec = base_spec(512, 500, tanh_profile(), false, 8);
  spec.times = {0.25, 0.5};
  const auto& e = run_ensemble(spec);
  const double gamma = mc_law().mean_inverse();
  const auto m = mean_estimate(scaled(e.current(0.5), 1.0 / 512));
  const double th = -boundary_flux_integral(tanh_profile(), gamma, 0.5) / gamma;
  const auto c = within("", m.value, m.se, th, 3, 0.01);
  r.pass = c.pass;
  r.detail = "E J/N " + pm(m.value, m.se) + ", limit " + fmt(th, 6);
  return r;
}

inline CriterionResult current_clt() {
  CriterionResult r{"9", "current fluctuations, N = 256, M = 5000"};
  const double gamma = mc_law().mean_inverse();
  std::ostringstream os;
  r.pass = true;
  const std::pair<const char*, Shape> cases[] = {{"equilibrium", Shape::constant(alpha_eq)}, {"tanh", tanh_profile()}};
  for (const auto& [label, prof] : cases) {
    const auto& e = std::string(label) == "tanh" ? front_ensemble() : equilibrium_ensemble();
    const auto v = variance_estimate(scaled(e.current(0.5), 1 / std::sqrt(256.0)));
    const auto th = theory_current_covariance(gamma, prof, 0.5, 0.5);
    const auto dual = theory_current_covariance_dual(gamma, prof, 0.5, 0.5);
    const auto c = within("", v.value, v.se, th.value, 3, 0, th.error);
    const bool dual_ok = std::abs(dual.value - th.value) <= 1e-4;
    r.pass = r.pass && c.pass && dual_ok;
    os << label << ": MC " << pm(v.value, v.se) << ", theory " << fmt(th.value, 6) << ", dual diff "
       << fmt(std::abs(dual.value - th.value), 2) << "; ";
  }
  r.detail = os.str();
  return r;
}

inline CriterionResult tagged_lln() {
  CriterionResult r{"10", "tagged particle law of large numbers, N = 512, M = 500"};
  auto spec = base_spec(512, 500, tanh_profile(), true, 10);
  spec.times = {0.25, 0.5};
  spec.current = true;
  const auto& e = run_ensemble(spec);
  const double gamma = mc_law().mean_inverse();
  const double ut = compute_ut(gamma, tanh_profile(), {0.5}).u_ode.back();
  const long utN = compute_utN(e.traj.profiles[e.time_index(0.5)]);
  const auto m = mean_estimate(scaled(e.tagged(0.5), 1.0 / 512));
  const bool a = std::abs(m.value - ut) <= 0.05, b = std::abs(double(utN) / 512 - ut) <= 0.02;
  r.pass = a && b && e.tagged_lost == 0;
  r.detail = "E X/N " + pm(m.value, m.se) + ", u_t " + fmt(ut, 6) + ", u_t^N/N " + fmt(double(utN) / 512, 6);
  if (e.tagged_lost) r.detail += ", " + std::to_string(e.tagged_lost) + " tags lost";
  return r;
}

inline CriterionResult tagged_clt() {
  CriterionResult r{"11", "tagged particle fluctuations, N = 256, M = 5000"};
  const auto& e = tagged_ensemble();
  const double gamma = mc_law().mean_inverse(), N = 256;
  const long utN = compute_utN(e.traj.profiles[e.time_index(0.5)]);
  const auto W = scaled(e.tagged(0.5), 1 / std::sqrt(N), double(utN));
  const auto th = theory_tagged_covariance(gamma, tanh_profile(), 0.5, 0.5);
  const auto v = variance_estimate(W);
  const auto c = within("", v.value, v.se, th.value, 4, 0, th.error);
  const auto sh = clt_shape_test(W, th.value, 1 / std::sqrt(N));
  r.pass = c.pass && sh.pass && e.tagged_lost == 0;
  r.detail = "Var W " + pm(v.value, v.se) + ", theory " + fmt(th.value, 6) + ", KS p " + fmt(sh.p_value, 3) +
             ", skew " + fmt(sh.skewness, 2) + ", exkurt " + fmt(sh.excess_kurtosis, 2);
  return r;
}

inline CriterionResult nash() {
  CriterionResult r{"12", "on-diagonal heat kernel bound over 20 environments"};
  const auto n = nash_run(20, AcceptanceSeeds::env, wide_law(), 0.25, 16, 10);
  const auto& q = n.report;
  r.pass = q.pass;
  r.detail = "held-out max " + fmt(q.heldout_max) + " <= C0 " + fmt(q.C0) + " <= 2/eps " + fmt(q.bound) +
             ", monotone " + (q.monotone ? "yes" : "no") + ", fitted exponent " + fmt(q.exponent, 3);
  return r;
}

inline CriterionResult liggett() {
  CriterionResult r{"13", "two-particle comparison with independent walkers, K = 8"};
  const auto env = small_segment(AcceptanceSeeds::env, wide_law(), 8);
  std::vector<std::vector<double>> fs = {nearest_neighbour_function(8)};
  for (int i = 0; i < 5; ++i) fs.push_back(random_definite_function(8, hash_combine(AcceptanceSeeds::env, std::uint64_t(100 + i))));
  r.pass = true;
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& f : fs) {
    const auto L = liggett_check(env, f, {0.0, 0.1, 1.0}, 1e-10);
    r.pass = r.pass && L.pass;
    margin = std::min(margin, L.min_margin);
  }
  r.detail = "6 functions, min margin " + fmt(margin, 3);
  return r;
}

inline CriterionResult hitting() {
  CriterionResult r{"14", "hitting probability and coalescence tail, 1e5 walks"};
  const auto env = Environment::generate(AcceptanceSeeds::env, wide_law(), LatticeWindow::centered(16, 25, Boundary::frozen_buffer));
  const auto h = hitting_and_coalescence(env, 5, -4, log_grid(0.1, 100, 16), 100000, hash_combine(AcceptanceSeeds::mc, 14));
  r.pass = h.hitting_pass && h.coalescence_pass && h.escaped == 0;
  r.detail = "P(tau_a<tau_b) " + pm(h.mc, h.mc_se) + " vs " + fmt(h.exact, 6) + "; scaled tail early max " +
             fmt(h.early_max) + ", late max " + fmt(h.late_max) + ", late slope " + fmt(h.late_slope, 3);
  return r;
}

inline CriterionResult martingale() {
  CriterionResult r{"15", "martingale mean and quadratic variation, N = 128, M = 1e4"};
  auto spec = base_spec(128, 10000, tanh_profile(), false, 15);
  spec.times = {0.0, 0.25, 0.5};
  spec.half_width = 1.5;
  spec.current = false;
  spec.cutoff_l = 1;
  spec.martingales = {{"G", Shape::bump(1, 0, 1)}};
  const auto& e = run_ensemble(spec);
  const auto [m, q] = e.martingale("G", 0.5);
  const auto mm = mean_estimate(m);
  const auto v = variance_estimate(m);
  const auto qv = mean_estimate(q);
  const double ratio = v.value / qv.value;
  r.pass = std::abs(mm.value) <= 3 * mm.se && ratio >= 0.95 && ratio <= 1.05;
  r.detail = "mean M " + pm(mm.value, mm.se) + ", Var/QV " + fmt(ratio, 4) + " (+- " +
             fmt(ratio * std::hypot(v.se / v.value, qv.se / qv.value), 2) + ")";
  return r;
}

// ---- quick identities ---------------------------------------------------------------

inline CriterionResult flat_density_identity() {
  CriterionResult r{"F1", "flat-profile density covariance equals chi int G^2"};
  const Shape G = Shape::bump(1, 0, 0.5);
  const auto th = theory_density_covariance(2.0, Shape::constant(0.3), 0.4, 0.4, G, G);
  const double ex = 0.21 * integral_of_square(G);
  r.pass = std::abs(th.value - ex) <= 1e-6;
  r.detail = "diff " + fmt(std::abs(th.value - ex), 3);
  return r;
}

inline CriterionResult zero_time_identities() {
  CriterionResult r{"F2", "covariances at s = 0"};
  const double g = mc_law().mean_inverse();
  const Shape G = Shape::bump(1, 0, 0.5), rho = tanh_profile();
  const auto th = theory_density_covariance(g, rho, 0, 0.3, G, G);
  const auto direct = detail::integrate_pieces(
      [&](double u) { return detail::chi(rho.value(u)) * G.value(u) * heat_apply(G, 0.3, g, u).value; }, -0.5, 0.5,
      {0.0}, 1e-12);
  const double jc = theory_current_covariance(g, rho, 0, 0.3).value, wc = theory_tagged_covariance(g, rho, 0, 0.3).value;
  r.pass = std::abs(th.value - direct.value) <= 1e-8 && std::abs(jc) <= 1e-12 && std::abs(wc) <= 1e-12;
  r.detail = "density diff " + fmt(std::abs(th.value - direct.value), 3) + ", current " + fmt(jc, 3) + ", tagged " + fmt(wc, 3);
  return r;
}

inline CriterionResult flat_tagged_reduction() {
  CriterionResult r{"F3", "flat-profile tagged covariance is the current one over alpha^2"};
  const double g = 1.7, a = 0.35;
  const auto w = theory_tagged_covariance(g, Shape::constant(a), 0.2, 0.6);
  const auto j = theory_current_covariance(g, Shape::constant(a), 0.2, 0.6);
  const double d = std::abs(w.value - j.value / (a * a));
  r.pass = d <= 1e-9;
  r.detail = "diff " + fmt(d, 3);
  return r;
}

inline CriterionResult pathwise_relations() {
  CriterionResult r{"F4", "current conservation and tagged/current relation along trajectories"};
  const auto env = Environment::generate(AcceptanceSeeds::env, wide_law(), LatticeWindow::centered(16, 1.5, Boundary::frozen_buffer));
  const Simulator sim(env);
  ObservableRequest req;
  const auto& w = env.window();
  for (long b = w.x_min - 1; b <= w.x_max; ++b) req.current_bonds.push_back(b);
  req.tagged = true;
  req.snapshots = true;
  std::vector<double> times;
  for (int k = 1; k <= 20; ++k) times.push_back(0.005 * k);
  long checked = 0;
  try {
    for (long rep = 0; rep < 50; ++rep) {
      RandomStream init = replica_stream(AcceptanceSeeds::mc, std::uint64_t(rep), 0);
      const auto c = init_configuration(env, steep_profile(), init, true);
      const auto s = sim.run(c, 0.1, times, req, AcceptanceSeeds::mc, std::uint64_t(rep));
      checked += current_conservation_check(s, w).checked + tagged_vs_current_check(s).checked;
    }
    r.pass = true;
    r.detail = std::to_string(checked) + " relations checked";
  } catch (const Error& e) {
    r.detail = e.what();
  }
  return r;
}

inline CriterionResult gradient_bound() {
  CriterionResult r{"F5", "discrete gradient bound"};
  const auto env = Environment::generate(AcceptanceSeeds::env, wide_law(), LatticeWindow::centered(64, 2, Boundary::frozen_buffer));
  try {
    const auto traj = solve_discrete(env, steep_profile(), {0.0, 0.01, 0.05, 0.2, 0.5}, false);
    const auto g = gradient_bound_check(env, traj);
    r.pass = g.pass;
    r.detail = "observed ratio " + fmt(g.observed_ratio) + " <= " + fmt(g.bound_ratio);
  } catch (const Error& e) {
    r.detail = e.what();
  }
  return r;
}

inline CriterionResult philox_vectors() {
  CriterionResult r{"F6", "Philox4x32-10 known-answer vectors"};
  const auto a = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  const auto b = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  const auto c = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  r.pass = a == Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u} &&
           b == Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu} &&
           c == Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u};
  r.detail = r.pass ? "3 vectors match" : "mismatch";
  return r;
}

inline CriterionResult environment_roundtrip() {
  CriterionResult r{"F7", "environment JSON round trip"};
  const auto env = Environment::generate(AcceptanceSeeds::env, wide_law(), LatticeWindow::centered(32, 2, Boundary::frozen_buffer));
  const auto back = environment_from_json(json::parse(environment_to_json(env, false).dump()));
  const auto full = environment_from_json(json::parse(environment_to_json(env, true).dump()));
  r.pass = back.values() == env.values() && full.values() == env.values();
  r.detail = r.pass ? "bit-identical" : "values differ";
  return r;
}

}  // namespace acceptance

struct CriterionEntry {
  std::string id;
  std::function<CriterionResult()> run;
  bool fast;
};

inline const std::vector<CriterionEntry>& criteria_table() {
  using namespace acceptance;
  static const std::vector<CriterionEntry> t = {
      {"1", closure, true},           {"2", two_point_oracle, true},     {"3", correlation_decay, false},
      {"4", hydrodynamics, false},    {"5", transform_quality, true},    {"6", equilibrium_variance, false},
      {"7", density_covariance, false}, {"8", current_lln, false},       {"9", current_clt, false},
      {"10", tagged_lln, false},      {"11", tagged_clt, false},         {"12", nash, true},
      {"13", liggett, true},          {"14", hitting, true},             {"15", martingale, false},
      {"F1", flat_density_identity, true}, {"F2", zero_time_identities, true}, {"F3", flat_tagged_reduction, true},
      {"F4", pathwise_relations, true}, {"F5", gradient_bound, true},    {"F6", philox_vectors, true},
      {"F7", environment_roundtrip, true}};
  return t;
}

/// Runs one criterion; exceptions count as failures with the module diagnostic.
inline CriterionResult run_criterion(const CriterionEntry& e) {
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = e.run();
  } catch (const std::exception& ex) {
    r.id = e.id;
    r.name = "criterion " + e.id;
    r.pass = false;
    r.detail = std::string("error: ") + ex.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline std::string format_result(const CriterionResult& r) {
  std::ostringstream os;
  os << "criterion " << std::left << std::setw(3) << r.id << ' ' << (r.pass ? "PASS" : "FAIL") << "  " << r.name
     << "  [" << std::fixed << std::setprecision(1) << r.seconds << " s]  " << r.detail;
  return os.str();
}

/// Runs the suite for level "fast" or "full", printing one line per criterion.
inline std::vector<CriterionResult> verify(const std::string& level, std::ostream& os) {
  require(level == "fast" || level == "full", "cli", "unknown verify level '" + level + "' (use fast or full)");
  std::vector<CriterionResult> out;
  for (const auto& e : criteria_table()) {
    if (level == "fast" && !e.fast) continue;
    out.push_back(run_criterion(e));
    os << format_result(out.back()) << std::endl;
  }
  long passed = 0;
  for (const auto& r : out) passed += r.pass;
  os << passed << "/" << out.size() << " criteria passed" << std::endl;
  return out;
}

}  // namespace rcsep
