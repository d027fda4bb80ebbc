#pragma once

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "rcsep/dynamics.hpp"
#include "rcsep/environment.hpp"
#include "rcsep/error.hpp"
#include "rcsep/functions.hpp"
#include "rcsep/pde.hpp"
#include "rcsep/rng.hpp"
#include "rcsep/uniformization.hpp"

namespace rcsep {

// ---- exact master equation -------------------------------------------------

/// Exclusion dynamics on the K window sites as a chain on {0,1}^K (bit i = site x_min+i).
/// Frozen-buffer reservoir bonds set the edge site to a fresh Bernoulli(reservoir) value
/// and then exchange, i.e. fill at rate c rho and empty at rate c (1 - rho).
struct MasterChain {
  int K = 0;
  bool periodic = false;
  double rho_left = 0, rho_right = 0;
  std::vector<double> rate;  // as LineOperator: rate[j] joins sites j-1 and j; 0 and K are the edge bonds
  double lambda = 0;

  static MasterChain build(const Environment& env, double rho_left, double rho_right) {
    const auto& w = env.window();
    require(w.sites() <= 12, "oracle",
            "master equation limited to K <= 12 sites, window has " + std::to_string(w.sites()));
    MasterChain m;
    m.K = int(w.sites());
    m.periodic = w.boundary == Boundary::periodic;
    m.rho_left = rho_left;
    m.rho_right = rho_right;
    const LineOperator op = LineOperator::build(env, double(w.N) * w.N);
    m.rate = op.rate;
    for (std::uint32_t s = 0; s < m.states(); ++s) {
      double out = 0;
      m.transitions(s, [&](std::uint32_t, double q) { out += q; });
      m.lambda = std::max(m.lambda, out);
    }
    return m;
  }

  std::uint32_t states() const { return 1u << K; }

  template <class F>
  void transitions(std::uint32_t s, F&& f) const {
    for (int i = 0; i + 1 < K; ++i)
      if (((s >> i) ^ (s >> (i + 1))) & 1u) f(s ^ (3u << i), rate[std::size_t(i + 1)]);
    if (periodic) {
      if (((s >> (K - 1)) ^ s) & 1u) f(s ^ (1u | (1u << (K - 1))), rate[std::size_t(K)]);
      return;
    }
    const double cl = rate[0], cr = rate[std::size_t(K)];
    if (s & 1u) f(s ^ 1u, cl * (1 - rho_left));
    else f(s | 1u, cl * rho_left);
    const std::uint32_t top = 1u << (K - 1);
    if (s & top) f(s ^ top, cr * (1 - rho_right));
    else f(s | top, cr * rho_right);
  }

  /// out = p (I + Q / lambda) for a row distribution p.
  void step(const std::vector<double>& p, std::vector<double>& out) const {
    out = p;
    const double inv = 1.0 / lambda;
    for (std::uint32_t s = 0; s < states(); ++s) {
      if (p[s] == 0) continue;
      transitions(s, [&](std::uint32_t t, double q) {
        const double m = p[s] * q * inv;
        out[s] -= m;
        out[t] += m;
      });
    }
  }

  /// max |pi(s) q(s,t) - pi(t) q(t,s)| for the product Bernoulli(alpha) law.
  double detailed_balance_residual(double alpha) const {
    auto pi = [&](std::uint32_t s) {
      const int n = __builtin_popcount(s);
      return std::pow(alpha, n) * std::pow(1 - alpha, K - n);
    };
    double worst = 0;
    for (std::uint32_t s = 0; s < states(); ++s)
      transitions(s, [&](std::uint32_t t, double q) {
        double back = 0;
        transitions(t, [&](std::uint32_t u, double r) {
          if (u == s) back += r;
        });
        worst = std::max(worst, std::abs(pi(s) * q - pi(t) * back));
      });
    return worst;
  }
};

inline std::vector<double> product_law(const std::vector<double>& rho) {
  const std::size_t K = rho.size();
  std::vector<double> p(std::size_t(1) << K);
  for (std::uint32_t s = 0; s < p.size(); ++s) {
    double v = 1;
    for (std::size_t i = 0; i < K; ++i) v *= ((s >> i) & 1u) ? rho[i] : 1 - rho[i];
    p[s] = v;
  }
  return p;
}

inline std::vector<double> one_point(const std::vector<double>& law, int K) {
  std::vector<double> r(std::size_t(K), 0.0);
  for (std::uint32_t s = 0; s < law.size(); ++s)
    for (int i = 0; i < K; ++i)
      if ((s >> i) & 1u) r[std::size_t(i)] += law[s];
  return r;
}

/// phi(x,y) = E[eta(x) eta(y)] - rho(x) rho(y) as a K x K matrix with zero diagonal.
inline std::vector<double> two_point(const std::vector<double>& law, int K) {
  const auto r = one_point(law, K);
  std::vector<double> m(std::size_t(K * K), 0.0);
  for (std::uint32_t s = 0; s < law.size(); ++s)
    for (int i = 0; i < K; ++i)
      if ((s >> i) & 1u)
        for (int j = i + 1; j < K; ++j)
          if ((s >> j) & 1u) m[std::size_t(i * K + j)] += law[s];
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) {
      const double v = m[std::size_t(i * K + j)] - r[std::size_t(i)] * r[std::size_t(j)];
      m[std::size_t(i * K + j)] = m[std::size_t(j * K + i)] = v;
    }
  return m;
}

/// max over x<y<z of |E[(eta(x)-rho(x))(eta(y)-rho(y))(eta(z)-rho(z))]|.
inline double three_point_sup(const std::vector<double>& law, int K) {
  const auto r = one_point(law, K);
  double worst = 0;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j)
      for (int k = j + 1; k < K; ++k) {
        double e = 0;
        for (std::uint32_t s = 0; s < law.size(); ++s)
          e += law[s] * (double((s >> i) & 1u) - r[std::size_t(i)]) * (double((s >> j) & 1u) - r[std::size_t(j)]) *
               (double((s >> k) & 1u) - r[std::size_t(k)]);
        worst = std::max(worst, std::abs(e));
      }
  return worst;
}

struct MasterEquationResult {
  MasterChain chain;
  std::vector<double> times;
  std::vector<std::vector<double>> laws;           // [time][state]
  std::vector<std::vector<double>> mean_currents;  // [time][bond x_min-1 .. x_max]
  long terms = 0;

  std::vector<double> one_point_at(std::size_t k) const { return one_point(laws[k], chain.K); }
  std::vector<double> two_point_at(std::size_t k) const { return two_point(laws[k], chain.K); }
  double three_point_sup_at(std::size_t k) const { return three_point_sup(laws[k], chain.K); }
};

inline MasterEquationResult master_equation(const Environment& env, std::vector<double> law,
                                            double rho_left, double rho_right,
                                            const std::vector<double>& t_grid, double tol = 1e-13) {
  MasterEquationResult res;
  res.chain = MasterChain::build(env, rho_left, rho_right);
  const auto& ch = res.chain;
  require(law.size() == ch.states(), "oracle", "initial law has the wrong number of states");
  const int K = ch.K;
  std::vector<double> flux_int(std::size_t(K + 1), 0.0);
  double t_now = 0;
  for (double t : t_grid) {
    require(t >= t_now, "oracle", "time grid must be increasing");
    const double dt = t - t_now;
    if (dt > 0) {
      std::vector<double> acc(law.size(), 0.0), integ(law.size(), 0.0);
      res.terms += uniformize(
          law, ch.lambda * dt, [&](const std::vector<double>& in, std::vector<double>& out) { ch.step(in, out); },
          [&](long, double pmf, double tail, const std::vector<double>& w) {
            for (std::size_t i = 0; i < w.size(); ++i) {
              acc[i] += pmf * w[i];
              integ[i] += tail * w[i];
            }
          },
          tol);
      law.swap(acc);
      // int_0^dt rho_s ds, then mean current c (rho_left - rho_right) across every bond
      auto r = one_point(integ, K);
      for (auto& v : r) v /= ch.lambda;
      const double tot = dt;
      for (int j = 0; j <= K; ++j) {
        const double left = j == 0 ? (ch.periodic ? r[std::size_t(K - 1)] : ch.rho_left * tot) : r[std::size_t(j - 1)];
        const double right = j == K ? (ch.periodic ? r[0] : ch.rho_right * tot) : r[std::size_t(j)];
        flux_int[std::size_t(j)] += ch.rate[std::size_t(j)] * (left - right);
      }
      if (ch.periodic) flux_int[0] = flux_int[std::size_t(K)];
    }
    t_now = t;
    res.times.push_back(t);
    res.laws.push_back(law);
    res.mean_currents.push_back(flux_int);
  }
  return res;
}

/// Product Bernoulli(rho0(x/N)) start with reservoirs at rho0 of the ghost sites.
inline MasterEquationResult master_equation(const Environment& env, const Shape& rho0,
                                            const std::vector<double>& t_grid, double tol = 1e-13) {
  rho0.validate_profile();
  const auto& w = env.window();
  std::vector<double> r;
  for (long x = w.x_min; x <= w.x_max; ++x) r.push_back(rho0.value(double(x) / w.N));
  return master_equation(env, product_law(r), rho0.value(double(w.x_min - 1) / w.N),
                         rho0.value(double(w.x_max + 1) / w.N), t_grid, tol);
}

// ---- two-point correlations ------------------------------------------------

/// phi_t(x,y) stored as a full symmetric S x S matrix with zero diagonal.
struct TwoPointField {
  LatticeWindow window;
  double t = 0;
  std::vector<double> values;
  double sup = 0;

  double at(long x, long y) const {
    const long S = window.sites();
    return values[std::size_t(window.index(x) * S + window.index(y))];
  }
};

struct TwoPointOptions {
  enum class Method { automatic, dopri5, adi };
  Method method = Method::automatic;
  double tol = 1e-11;  // dopri5 absolute and relative tolerance
  double h0 = 1e-5, growth = 1.15, h_max = 2e-3;
  int rannacher_steps = 2;
  bool store_fields = true;
};

struct TwoPointResult {
  std::vector<double> times;
  std::vector<TwoPointField> fields;  // empty unless store_fields
  std::vector<double> sup;            // sup_{x != y} |phi_t| at grid times
  std::vector<double> running_sup;    // sup over all steps up to each grid time
  double profile_mismatch = 0;        // against a supplied one-point trajectory
  const char* method = "";
  long steps = 0;
};

namespace detail {

/// The one-coordinate part of the two-particle exclusion generator acting on rows:
/// (R phi)(a,b) moves b across its bonds, the bond into a is blocked, reservoirs are
/// absorbing (phi = 0 there), periodic windows wrap through bond x_max.
struct PairLines {
  long S = 0;
  bool periodic = false;
  std::vector<double> rate;  // rate[i] joins sites i-1 and i; rate[0], rate[S] the edge bonds
  mutable std::vector<double> cp, dp, gather, path_rate;

  explicit PairLines(const LineOperator& op) : S(op.S), periodic(op.periodic), rate(op.rate) {
    cp.resize(std::size_t(S));
    dp.resize(std::size_t(S));
    gather.resize(std::size_t(S));
    path_rate.resize(std::size_t(S));
  }

  double exact(const double* in, long a, long b) const {
    const double v = in[b];
    double acc = 0;
    if (b > 0) {
      if (b - 1 != a) acc += rate[std::size_t(b)] * (in[b - 1] - v);
    } else if (periodic) {
      if (S - 1 != a) acc += rate[std::size_t(S)] * (in[S - 1] - v);
    } else {
      acc -= rate[0] * v;
    }
    if (b < S - 1) {
      if (b + 1 != a) acc += rate[std::size_t(b + 1)] * (in[b + 1] - v);
    } else if (periodic) {
      if (a != 0) acc += rate[std::size_t(S)] * (in[0] - v);
    } else {
      acc -= rate[std::size_t(S)] * v;
    }
    return acc;
  }

  /// out = in + theta R in on row a (in[a] must be 0; out[a] is set to 0).
  void explicit_row(const double* in, double* out, long a, double theta) const {
    const double* r = rate.data();
    for (long b = 1; b < S - 1; ++b)
      out[b] = in[b] + theta * (r[b] * (in[b - 1] - in[b]) + r[b + 1] * (in[b + 1] - in[b]));
    for (long b : {0L, S - 1, a - 1, a + 1})
      if (b >= 0 && b < S && b != a) out[b] = in[b] + theta * exact(in, a, b);
    out[a] = 0;
  }

  /// R in on row a, no identity part.
  void apply_row(const double* in, double* out, long a) const {
    const double* r = rate.data();
    for (long b = 1; b < S - 1; ++b)
      out[b] = r[b] * (in[b - 1] - in[b]) + r[b + 1] * (in[b + 1] - in[b]);
    for (long b : {0L, S - 1, a - 1, a + 1})
      if (b >= 0 && b < S && b != a) out[b] = exact(in, a, b);
    out[a] = 0;
  }

  // Thomas solve of (I - theta R) x = y on a path; w[k] joins path cells k and k+1,
  // leak_lo / leak_hi are absorbing rates at the two ends.
  void solve_path(double* y, long m, const double* w, double leak_lo, double leak_hi, double theta) const {
    if (m <= 0) return;
    double* c = cp.data();
    double* d = dp.data();
    auto diag = [&](long k) {
      double s = (k > 0 ? w[k - 1] : leak_lo) + (k < m - 1 ? w[k] : leak_hi);
      return 1 + theta * s;
    };
    double den = diag(0);
    c[0] = m > 1 ? -theta * w[0] / den : 0;
    d[0] = y[0] / den;
    for (long k = 1; k < m; ++k) {
      const double lo = -theta * w[k - 1];
      den = diag(k) - lo * c[k - 1];
      c[k] = k < m - 1 ? -theta * w[k] / den : 0;
      d[k] = (y[k] - lo * d[k - 1]) / den;
    }
    y[m - 1] = d[m - 1];
    for (long k = m - 2; k >= 0; --k) y[k] = d[k] - c[k] * y[k + 1];
  }

  /// Solves (I - theta R) x = row in place for row a.
  void solve_row(double* row, long a, double theta) const {
    if (!periodic) {
      // segment [0, a-1]: absorbing at site 0, blocked at a
      if (a > 0) solve_path(row, a, rate.data() + 1, rate[0], 0.0, theta);
      // segment [a+1, S-1]: blocked at a, absorbing at site S-1
      if (a < S - 1) solve_path(row + a + 1, S - 1 - a, rate.data() + a + 2, 0.0, rate[std::size_t(S)], theta);
      row[a] = 0;
      return;
    }
    const long m = S - 1;
    double* g = gather.data();
    std::vector<double>& wv = path_rate;
    for (long j = 0; j < m; ++j) {
      const long p = (a + 1 + j) % S;
      g[j] = row[p];
      wv[std::size_t(j)] = p == S - 1 ? rate[std::size_t(S)] : rate[std::size_t(p + 1)];
    }
    solve_path(g, m, wv.data(), 0.0, 0.0, theta);
    for (long j = 0; j < m; ++j) row[(a + 1 + j) % S] = g[j];
    row[a] = 0;
  }

  /// Source Gamma(x, x+1) = -rate (rho(x+1) - rho(x))^2 on adjacent pairs, scaled by theta.
  void add_source(std::vector<double>& M, const std::vector<double>& rho, double theta) const {
    for (long i = 0; i + 1 < S; ++i) {
      const double d = rho[std::size_t(i + 1)] - rho[std::size_t(i)];
      const double g = -theta * rate[std::size_t(i + 1)] * d * d;
      M[std::size_t(i * S + i + 1)] += g;
      M[std::size_t((i + 1) * S + i)] += g;
    }
    if (periodic && S > 2) {
      const double d = rho[0] - rho[std::size_t(S - 1)];
      const double g = -theta * rate[std::size_t(S)] * d * d;
      M[std::size_t(S - 1)] += g;
      M[std::size_t((S - 1) * S)] += g;
    }
  }
};

inline void transpose(const std::vector<double>& in, std::vector<double>& out, long S) {
  constexpr long B = 32;
  for (long i0 = 0; i0 < S; i0 += B)
    for (long j0 = 0; j0 < S; j0 += B) {
      const long i1 = std::min(S, i0 + B), j1 = std::min(S, j0 + B);
      for (long i = i0; i < i1; ++i)
        for (long j = j0; j < j1; ++j) out[std::size_t(j * S + i)] = in[std::size_t(i * S + j)];
    }
}

// Symmetrizes in place and returns the largest |entry|.
inline double symmetrize(std::vector<double>& M, long S) {
  double sup = 0;
  for (long i = 0; i < S; ++i) {
    M[std::size_t(i * S + i)] = 0;
    for (long j = i + 1; j < S; ++j) {
      double& a = M[std::size_t(i * S + j)];
      double& b = M[std::size_t(j * S + i)];
      const double v = 0.5 * (a + b);
      a = b = v;
      sup = std::max(sup, std::abs(v));
    }
  }
  return sup;
}

inline double offdiag_sup(const std::vector<double>& M, long S) {
  double sup = 0;
  for (long i = 0; i < S; ++i)
    for (long j = 0; j < S; ++j)
      if (i != j) sup = std::max(sup, std::abs(M[std::size_t(i * S + j)]));
  return sup;
}

// Exact advance of the one-point profile (padded with reservoir ghosts).
inline void advance_profile(const LineOperator& op, std::vector<double>& ext, double dt) {
  if (dt <= 0) return;
  std::vector<double> acc(ext.size(), 0.0);
  uniformize(
      ext, op.lambda * dt, [&](std::vector<double>& in, std::vector<double>& out) { op.step(in, out); },
      [&](long, double pmf, double, const std::vector<double>& w) {
        for (std::size_t i = 0; i < w.size(); ++i) acc[i] += pmf * w[i];
      },
      1e-14);
  ext.swap(acc);
  op.refresh_ghosts(ext);
}

}  // namespace detail

/// Solves d phi/dt = L_2 phi + Gamma_t from phi_0 = 0 (product start), where L_2 moves
/// either coordinate of the ordered pair with exclusion and Gamma_t(x,x+1) =
/// -N^2 xi_x (rho_t(x+1) - rho_t(x))^2. The profile rho_t is advanced exactly alongside.
inline TwoPointResult two_point_ode(const Environment& env, const Shape& rho0, const std::vector<double>& t_grid,
                                    TwoPointOptions opt = {}) {
  rho0.validate_profile();
  const auto& w = env.window();
  const long S = w.sites();
  const double N = w.N;
  for (std::size_t k = 0; k < t_grid.size(); ++k)
    require(t_grid[k] >= 0 && (k == 0 || t_grid[k] > t_grid[k - 1]), "oracle",
            "time grid must be non-negative and strictly increasing");
  if (opt.method == TwoPointOptions::Method::automatic)
    opt.method = S <= 48 ? TwoPointOptions::Method::dopri5 : TwoPointOptions::Method::adi;

  const LineOperator op = LineOperator::build(env, N * N);
  detail::PairLines lines(op);
  std::vector<double> ext(std::size_t(S + 2));
  for (long i = 0; i < S; ++i) ext[std::size_t(i + 1)] = rho0.value(double(w.x_min + i) / N);
  ext[0] = rho0.value(double(w.x_min - 1) / N);
  ext[std::size_t(S + 1)] = rho0.value(double(w.x_max + 1) / N);
  op.refresh_ghosts(ext);
  auto rho_of = [&](const std::vector<double>& e) { return std::vector<double>(e.begin() + 1, e.end() - 1); };

  TwoPointResult res;
  double running = 0;
  auto record = [&](double t, const std::vector<double>& M) {
    const double sup = detail::offdiag_sup(M, S);
    require(sup <= 0.25 + 1e-9, "oracle", "two-point correlation left [-1/4, 1/4]; integration unstable");
    running = std::max(running, sup);
    res.times.push_back(t);
    res.sup.push_back(sup);
    res.running_sup.push_back(running);
    if (opt.store_fields) res.fields.push_back({w, t, M, sup});
  };

  std::vector<double> phi(std::size_t(S * S), 0.0);
  double t_now = 0;

  if (opt.method == TwoPointOptions::Method::dopri5) {
    res.method = "dopri5";
    namespace ode = boost::numeric::odeint;
    using State = std::vector<double>;
    const std::size_t P = std::size_t(S + 2);
    State x(P + phi.size(), 0.0);
    std::copy(ext.begin(), ext.end(), x.begin());
    std::vector<double> tmp(phi.size()), in_e(P), out_e(P);
    auto rhs = [&](const State& y, State& dy, double) {
      std::copy(y.begin(), y.begin() + long(P), in_e.begin());
      op.generator(in_e, out_e);
      std::fill(dy.begin(), dy.begin() + long(P), 0.0);
      for (long i = 1; i <= S; ++i) dy[std::size_t(i)] = out_e[std::size_t(i)];
      const double* M = y.data() + P;
      for (long a = 0; a < S; ++a) lines.apply_row(M + a * S, tmp.data() + a * S, a);
      double* dM = dy.data() + P;
      for (long a = 0; a < S; ++a)
        for (long b = 0; b < S; ++b)
          dM[a * S + b] = a == b ? 0.0 : tmp[std::size_t(a * S + b)] + tmp[std::size_t(b * S + a)];
      std::vector<double> rho(in_e.begin() + 1, in_e.end() - 1);
      std::vector<double> src(phi.size(), 0.0);
      lines.add_source(src, rho, 1.0);
      for (std::size_t i = 0; i < src.size(); ++i) dM[i] += src[i];
    };
    auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<State>>(opt.tol, opt.tol);
    for (double t : t_grid) {
      if (t > t_now) res.steps += long(ode::integrate_adaptive(stepper, rhs, x, t_now, t, std::min(1e-4, t - t_now)));
      t_now = t;
      std::copy(x.begin() + long(P), x.end(), phi.begin());
      record(t, phi);
    }
    return res;
  }

  res.method = "peaceman-rachford-adi";
  std::vector<double> work(phi.size());
  long k = 0;
  for (double tg : t_grid) {
    while (tg - t_now > 1e-14) {
      double h = std::min(opt.h_max, opt.h0 * std::pow(opt.growth, double(k)));
      if (t_now + h > tg - 1e-14 || tg - (t_now + h) < 0.1 * h) h = tg - t_now;
      std::vector<double> half = ext;
      detail::advance_profile(op, half, 0.5 * h);
      const auto rho_mid = rho_of(half);
      if (k < opt.rannacher_steps) {
        // implicit Euler in each direction
        work = phi;
        lines.add_source(work, rho_mid, h);
        detail::transpose(work, phi, S);
        for (long a = 0; a < S; ++a) lines.solve_row(phi.data() + a * S, a, h);
        detail::transpose(phi, work, S);
        for (long a = 0; a < S; ++a) lines.solve_row(work.data() + a * S, a, h);
        phi.swap(work);
      } else {
        const double th = 0.5 * h;
        for (long a = 0; a < S; ++a) lines.explicit_row(phi.data() + a * S, work.data() + a * S, a, th);
        lines.add_source(work, rho_mid, th);
        detail::transpose(work, phi, S);
        for (long a = 0; a < S; ++a) lines.solve_row(phi.data() + a * S, a, th);
        for (long a = 0; a < S; ++a) lines.explicit_row(phi.data() + a * S, work.data() + a * S, a, th);
        lines.add_source(work, rho_mid, th);
        detail::transpose(work, phi, S);
        for (long a = 0; a < S; ++a) lines.solve_row(phi.data() + a * S, a, th);
      }
      // phi stays unsymmetrized; only recorded copies are
      running = std::max(running, detail::offdiag_sup(phi, S));
      detail::advance_profile(op, half, 0.5 * h);
      ext.swap(half);
      t_now += h;
      ++k;
      ++res.steps;
    }
    t_now = tg;
    work = phi;
    detail::symmetrize(work, S);
    record(tg, work);
  }
  return res;
}

/// Same, checked against a supplied one-point trajectory (which must start at t = 0).
inline TwoPointResult two_point_ode(const Environment& env, const Shape& rho0, const DiscreteTrajectory& traj,
                                    TwoPointOptions opt = {}) {
  require(!traj.profiles.empty() && traj.profiles.front().t == 0, "oracle",
          "profile trajectory must start at t = 0");
  require(traj.profiles.front().window == env.window(), "oracle", "profile window differs from the environment");
  require(!traj.profiles.front().starred, "oracle", "two-point equation needs the unstarred profile");
  std::vector<double> grid;
  for (const auto& p : traj.profiles) grid.push_back(p.t);
  auto res = two_point_ode(env, rho0, grid, opt);
  const auto& w = env.window();
  const LineOperator op = LineOperator::build(env, double(w.N) * w.N);
  std::vector<double> ext(std::size_t(w.sites() + 2));
  for (long i = 0; i < w.sites(); ++i) ext[std::size_t(i + 1)] = rho0.value(double(w.x_min + i) / w.N);
  ext[0] = rho0.value(double(w.x_min - 1) / w.N);
  ext.back() = rho0.value(double(w.x_max + 1) / w.N);
  op.refresh_ghosts(ext);
  double t = 0;
  for (const auto& p : traj.profiles) {
    detail::advance_profile(op, ext, p.t - t);
    t = p.t;
    for (long i = 0; i < w.sites(); ++i)
      res.profile_mismatch = std::max(res.profile_mismatch, std::abs(ext[std::size_t(i + 1)] - p.values[std::size_t(i)]));
  }
  return res;
}

inline void write_two_point_csv(std::ostream& os, const TwoPointResult& r) {
  os << "t,x,y,phi\n";
  for (const auto& f : r.fields)
    for (long x = f.window.x_min; x <= f.window.x_max; ++x)
      for (long y = x + 1; y <= f.window.x_max; ++y) os << f.t << ',' << x << ',' << y << ',' << f.at(x, y) << '\n';
}

// ---- random walk kernel ----------------------------------------------------

/// p_t(x,y) of the walk jumping across bond x at rate speed * xi_x; killed at the
/// frozen-buffer edges, wrapped on periodic windows.
struct WalkKernel {
  LatticeWindow window;
  double speed = 1;
  std::vector<double> times;
  std::vector<std::vector<double>> p;  // [time] S x S, row = source
  std::vector<double> sup_diag_sqrt_t;  // sup over the interior of p_t(x,x) sqrt(t)
  long interior_lo = 0, interior_hi = 0;
  double max_boundary_mass = 0;
  double truncation_error = 1e-13;

  double at(std::size_t k, long x, long y) const {
    const long S = window.sites();
    return p[k][std::size_t(window.index(x) * S + window.index(y))];
  }
};

inline WalkKernel walk_kernel(const Environment& env, const std::vector<double>& t_grid, double speed = 1.0,
                              double boundary_tol = 1e-10) {
  const auto& w = env.window();
  const long S = w.sites();
  const LineOperator op = LineOperator::build(env, speed);
  WalkKernel K;
  K.window = w;
  K.speed = speed;
  const long quarter = S / 4;
  K.interior_lo = w.x_min + quarter;
  K.interior_hi = w.x_max - quarter;
  const std::size_t P = std::size_t(S + 2);
  std::vector<double> M(std::size_t(S) * P, 0.0);
  for (long x = 0; x < S; ++x) M[std::size_t(x) * P + std::size_t(x + 1)] = 1.0;
  std::vector<double> row_in(P), row_out(P);
  double t_now = 0;
  for (double t : t_grid) {
    require(t >= t_now, "oracle", "time grid must be increasing");
    if (t > t_now) {
      std::vector<double> acc(M.size(), 0.0);
      uniformize(
          M, op.lambda * (t - t_now),
          [&](std::vector<double>& in, std::vector<double>& out) {
            for (long x = 0; x < S; ++x) {
              std::copy(in.begin() + long(std::size_t(x) * P), in.begin() + long(std::size_t(x + 1) * P), row_in.begin());
              op.step(row_in, row_out);
              std::copy(row_out.begin(), row_out.end(), out.begin() + long(std::size_t(x) * P));
            }
          },
          [&](long, double pmf, double, const std::vector<double>& v) {
            for (std::size_t i = 0; i < v.size(); ++i) acc[i] += pmf * v[i];
          },
          1e-13);
      M.swap(acc);
    }
    t_now = t;
    std::vector<double> pt(std::size_t(S * S));
    double sup = 0;
    for (long x = 0; x < S; ++x) {
      double mass = 0;
      for (long y = 0; y < S; ++y) {
        const double v = M[std::size_t(x) * P + std::size_t(y + 1)];
        pt[std::size_t(x * S + y)] = v;
        mass += v;
      }
      const long site = w.x_min + x;
      if (site >= K.interior_lo && site <= K.interior_hi) {
        K.max_boundary_mass = std::max(K.max_boundary_mass, 1 - mass);
        sup = std::max(sup, pt[std::size_t(x * S + x)]);
      }
    }
    K.times.push_back(t);
    K.sup_diag_sqrt_t.push_back(sup * std::sqrt(t));
    K.p.push_back(std::move(pt));
  }
  if (w.boundary == Boundary::frozen_buffer && K.max_boundary_mass > boundary_tol)
    throw Error("oracle", "walk mass reaching the window edge is " + std::to_string(K.max_boundary_mass) +
                              "; enlarge the window");
  return K;
}

/// e^{-2t} I_0(2t), the return probability of the rate-one-per-direction walk.
inline double bessel_return_probability(double t) {
  return std::exp(-2 * t) * std::cyl_bessel_i(0.0, 2 * t);
}

struct LineFit {
  double slope = 0, intercept = 0, residual = 0;
};

/// Least squares of log y on log x; residual is the RMS of the log residuals.
inline LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "stats", "log-log fit needs at least two points");
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0 && y[i] > 0, "stats", "log-log fit needs positive data");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  LineFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  double r = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = std::log(y[i]) - f.intercept - f.slope * std::log(x[i]);
    r += e * e;
  }
  f.residual = std::sqrt(r / n);
  return f;
}

struct NashReport {
  double C0 = 0;  // sqrt(max t_{i+1}/t_i) times the largest sup_x p_t(x,x) sqrt(t) over the fitting times
  double fit_max = 0;      // largest sup_x p_t(x,x) sqrt(t) over the fitting times
  double heldout_max = 0;  // the same over held-out times
  double bound = 0;        // 2 / eps
  double exponent = 0, constant = 0, residual = 0;  // power-law fit of sup_x p_t(x,x) for t >= 1
  bool monotone = true;    // sup_x p_t(x,x) non-increasing along the fitting grid
  bool pass = false;
};

/// The return probability p_t(x,x) of a reversible walk is non-increasing in t, so between
/// consecutive grid times t_i <= t <= t_{i+1}, p_t sqrt(t) <= p_{t_i} sqrt(t_i) sqrt(t_{i+1}/t_i).
/// C0 is therefore a bound for every t in the fitted range, not just the grid points.
inline NashReport nash_report(const std::vector<WalkKernel>& fit, const std::vector<WalkKernel>& heldout, double eps) {
  NashReport r;
  r.bound = 2 / eps;
  std::vector<double> ts, ps;
  double ratio = 1;
  for (const auto& k : fit) {
    double prev_t = 0, prev_p = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k.times.size(); ++i) {
      const double t = k.times[i];
      if (t <= 0) continue;
      const double p = k.sup_diag_sqrt_t[i] / std::sqrt(t);
      if (p > prev_p * (1 + 1e-12)) r.monotone = false;
      if (prev_t > 0) ratio = std::max(ratio, t / prev_t);
      prev_t = t;
      prev_p = p;
      r.fit_max = std::max(r.fit_max, k.sup_diag_sqrt_t[i]);
      if (t >= 1) {
        ts.push_back(t);
        ps.push_back(p);
      }
    }
  }
  r.C0 = std::sqrt(ratio) * r.fit_max;
  for (const auto& k : heldout)
    for (std::size_t i = 0; i < k.times.size(); ++i)
      if (k.times[i] > 0) r.heldout_max = std::max(r.heldout_max, k.sup_diag_sqrt_t[i]);
  if (ts.size() >= 2) {
    const auto f = loglog_fit(ts, ps);
    r.exponent = f.slope;
    r.constant = std::exp(f.intercept);
    r.residual = f.residual;
  }
  r.pass = r.monotone && r.heldout_max <= r.C0 && r.C0 <= r.bound;
  return r;
}

inline void write_kernel_csv(std::ostream& os, const WalkKernel& k) {
  os << "t,x,y,p\n";
  for (std::size_t i = 0; i < k.times.size(); ++i)
    for (long x = k.window.x_min; x <= k.window.x_max; ++x)
      for (long y = k.window.x_min; y <= k.window.x_max; ++y)
        os << k.times[i] << ',' << x << ',' << y << ',' << k.at(i, x, y) << '\n';
}

// ---- comparison with independent particles -------------------------------

struct DefinitenessResult {
  bool ok = false;
  double min_eigenvalue = 0;
  std::vector<double> direction;  // mean-zero vector attaining it
};

/// Checks sum f(x,y) b(x) b(y) >= -tol over every mean-zero b on the K sites, via the
/// spectrum of f restricted to an orthonormal basis of mean-zero vectors.
inline DefinitenessResult check_definite(const std::vector<double>& f, int K, double tol = 1e-10) {
  require(f.size() == std::size_t(K * K), "oracle", "pair function has the wrong size");
  Eigen::MatrixXd F(K, K), B = Eigen::MatrixXd::Zero(K, K - 1);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) F(i, j) = f[std::size_t(i * K + j)];
  require((F - F.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "oracle", "pair function is not symmetric");
  for (int j = 0; j + 1 < K; ++j) {
    B(j, j) = 1;
    B(j + 1, j) = -1;
  }
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(B).householderQ() * Eigen::MatrixXd::Identity(K, K - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q.transpose() * F * Q);
  DefinitenessResult r;
  r.min_eigenvalue = es.eigenvalues()(0);
  r.ok = r.min_eigenvalue >= -tol;
  const Eigen::VectorXd d = Q * es.eigenvectors().col(0);
  r.direction.assign(d.data(), d.data() + K);
  return r;
}

/// f = A A^T + c 1 1^T with a random K x r matrix A and c in [-1, 1]; definite on
/// mean-zero vectors but not necessarily positive semidefinite.
inline std::vector<double> random_definite_function(int K, std::uint64_t seed, int rank = 3) {
  RandomStream rng(seed, 0x11661E77);
  std::vector<double> A(std::size_t(K * rank));
  for (auto& a : A) a = 2 * rng.uniform() - 1;
  const double c = 2 * rng.uniform() - 1;
  std::vector<double> f(std::size_t(K * K));
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      double s = c;
      for (int q = 0; q < rank; ++q) s += A[std::size_t(i * rank + q)] * A[std::size_t(j * rank + q)];
      f[std::size_t(i * K + j)] = s;
    }
  return f;
}

/// f(x,y) = 2 1{x=y} + 1{|x-y|=1}.
inline std::vector<double> nearest_neighbour_function(int K) {
  std::vector<double> f(std::size_t(K * K), 0.0);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) f[std::size_t(i * K + j)] = i == j ? 2.0 : (std::abs(i - j) == 1 ? 1.0 : 0.0);
  return f;
}

struct LiggettReport {
  std::vector<double> times;
  std::vector<std::vector<double>> exclusion, independent;  // [time] K x K, off-diagonal meaningful
  double min_margin = 0;     // min over t > 0, x != y of S^0 f - S f
  double t0_mismatch = 0;    // max |S(0) f - f| and |S^0(0) f - f|
  double min_eigenvalue = 0;
  bool pass = false;
};

/// Two particles on the K window sites with bond rates N^2 xi (reflecting ends, or wrapped):
/// S(t) f under exclusion and S^0(t) f for independent walkers.
inline LiggettReport liggett_check(const Environment& env, const std::vector<double>& f,
                                   const std::vector<double>& t_grid, double tol = 1e-10) {
  const auto& w = env.window();
  const int K = int(w.sites());
  require(K <= 10, "oracle", "comparison limited to K <= 10 sites");
  const auto def = check_definite(f, K);
  if (!def.ok) {
    std::string dir;
    for (double d : def.direction) dir += (dir.empty() ? "" : ",") + std::to_string(d);
    throw Error("oracle", "pair function is not definite positive: quadratic form " +
                              std::to_string(def.min_eigenvalue) + " along (" + dir + ")");
  }
  const bool periodic = w.boundary == Boundary::periodic;
  const double N2 = double(w.N) * w.N;
  // bonds (i, i+1) and, on a torus, (K-1, 0)
  std::vector<std::pair<int, int>> bonds;
  std::vector<double> br;
  for (int i = 0; i + 1 < K; ++i) {
    bonds.push_back({i, i + 1});
    br.push_back(N2 * env.xi(w.x_min + i));
  }
  if (periodic) {
    bonds.push_back({K - 1, 0});
    br.push_back(N2 * env.xi(w.x_max));
  }
  const int n = K * K;
  auto run = [&](bool exclusion) {
    double lambda = 0;
    for (int s = 0; s < n; ++s) {
      double out = 0;
      const int x = s / K, y = s % K;
      for (std::size_t b = 0; b < bonds.size(); ++b) {
        const auto [u, v] = bonds[b];
        for (int who = 0; who < 2; ++who) {
          const int p = who == 0 ? x : y, o = who == 0 ? y : x;
          if (p != u && p != v) continue;
          const int q = p == u ? v : u;
          if (exclusion && q == o) continue;
          out += br[b];
        }
      }
      lambda = std::max(lambda, out);
    }
    auto step = [&](const std::vector<double>& in, std::vector<double>& out) {
      for (int s = 0; s < n; ++s) {
        const int x = s / K, y = s % K;
        double acc = 0;
        if (!(exclusion && x == y))
          for (std::size_t b = 0; b < bonds.size(); ++b) {
            const auto [u, v] = bonds[b];
            if (x == u || x == v) {
              const int q = x == u ? v : u;
              if (!(exclusion && q == y)) acc += br[b] * (in[std::size_t(q * K + y)] - in[std::size_t(s)]);
            }
            if (y == u || y == v) {
              const int q = y == u ? v : u;
              if (!(exclusion && q == x)) acc += br[b] * (in[std::size_t(x * K + q)] - in[std::size_t(s)]);
            }
          }
        out[std::size_t(s)] = in[std::size_t(s)] + acc / lambda;
      }
    };
    std::vector<std::vector<double>> out;
    std::vector<double> u = f;
    double t_now = 0;
    for (double t : t_grid) {
      require(t >= t_now, "oracle", "time grid must be increasing");
      if (t > t_now) {
        std::vector<double> acc(u.size(), 0.0);
        uniformize(u, lambda * (t - t_now), step,
                   [&](long, double pmf, double, const std::vector<double>& v) {
                     for (std::size_t i = 0; i < v.size(); ++i) acc[i] += pmf * v[i];
                   },
                   1e-15);
        u.swap(acc);
      }
      t_now = t;
      out.push_back(u);
    }
    return out;
  };
  LiggettReport r;
  r.times = t_grid;
  r.min_eigenvalue = def.min_eigenvalue;
  r.exclusion = run(true);
  r.independent = run(false);
  r.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t_grid.size(); ++k)
    for (int x = 0; x < K; ++x)
      for (int y = 0; y < K; ++y) {
        if (x == y) continue;
        const std::size_t i = std::size_t(x * K + y);
        if (t_grid[k] > 0) r.min_margin = std::min(r.min_margin, r.independent[k][i] - r.exclusion[k][i]);
        else
          r.t0_mismatch = std::max({r.t0_mismatch, std::abs(r.exclusion[k][i] - f[i]), std::abs(r.independent[k][i] - f[i])});
      }
  r.pass = r.min_margin >= -tol && r.t0_mismatch <= tol;
  return r;
}

// ---- hitting and coalescence -------------------------------------------------

struct HittingReport {
  long a = 0, b = 0;
  double exact = 0;     // P_0(tau_a < tau_b) = -u(b) / (u(a) - u(b))
  double mc = 0, mc_se = 0;
  long replicas = 0;
  std::vector<double> t_grid;
  std::vector<double> hit_tail, hit_tail_se;    // P(tau_a > t)
  std::vector<double> coal_tail, coal_tail_se;  // P(tau* > t), walkers from 0 and 1
  std::vector<double> coal_scaled;              // P(tau* > t) sqrt(1 + t)
  double envelope = 0;                          // max of coal_scaled
  double early_max = 0, late_max = 0, late_max_se = 0;
  double late_slope = 0;  // log-log slope of P(tau* > t) against 1 + t over the late half
  long escaped = 0;
  std::vector<std::string> warnings;
  bool hitting_pass = false, coalescence_pass = false;
};

/// Harmonic coordinate u(0) = 0, u(x+1) - u(x) = 1/xi_x.
inline double harmonic_coordinate(const Environment& env, long x) {
  double u = 0;
  if (x >= 0)
    for (long j = 0; j < x; ++j) u += 1.0 / env.xi(j);
  else
    for (long j = x; j < 0; ++j) u -= 1.0 / env.xi(j);
  return u;
}

/// Walks jump across bond x at rate xi_x (unit speed). MC replicas use streams
/// (seed, replica, purpose) with purposes 10, 11, 12 for the three experiments.
inline HittingReport hitting_and_coalescence(const Environment& env, long a, long b, const std::vector<double>& t_grid,
                                             long replicas, std::uint64_t seed, int threads = 1) {
  require(b < 0 && 0 < a, "oracle", "targets must satisfy b < 0 < a");
  const auto& w = env.window();
  require(w.contains(a) && w.contains(b), "oracle", "targets outside the window");
  require(replicas >= 2, "oracle", "need at least two replicas");
  require(!t_grid.empty(), "oracle", "empty time grid");
  HittingReport r;
  r.a = a;
  r.b = b;
  r.replicas = replicas;
  r.t_grid = t_grid;
  const double ua = harmonic_coordinate(env, a), ub = harmonic_coordinate(env, b);
  r.exact = -ub / (ua - ub);
  const double t_max = t_grid.back();
  const long lo = w.x_min, hi = w.x_max;

  auto jump = [&](long x, RandomStream& rng) {
    const double l = env.xi(x - 1), rr = env.xi(x);
    return rng.uniform() * (l + rr) < rr ? x + 1 : x - 1;
  };
  const auto R = static_cast<std::size_t>(replicas);
  std::vector<std::uint8_t> hit_first(R);
  std::vector<double> tau_a(R), tau_c(R);
  std::atomic<long> escaped{0};
  for_each_replica(replicas, threads, [&](long rep) {
    RandomStream g1 = replica_stream(seed, std::uint64_t(rep), 10);
    long x = 0;
    while (x != a && x != b) x = jump(x, g1);
    hit_first[std::size_t(rep)] = x == a;

    RandomStream g2 = replica_stream(seed, std::uint64_t(rep), 11);
    x = 0;
    double t = 0;
    for (;;) {
      t += g2.exponential() / (env.xi(x - 1) + env.xi(x));
      if (t > t_max) break;
      x = jump(x, g2);
      if (x == a) break;
      if (x <= lo || x >= hi) {
        ++escaped;
        t = std::numeric_limits<double>::infinity();
        break;
      }
    }
    tau_a[std::size_t(rep)] = t;

    RandomStream g3 = replica_stream(seed, std::uint64_t(rep), 12);
    long y0 = 0, y1 = 1;
    t = 0;
    for (;;) {
      const double r0 = env.xi(y0 - 1) + env.xi(y0), r1 = env.xi(y1 - 1) + env.xi(y1);
      t += g3.exponential() / (r0 + r1);
      if (t > t_max) break;
      if (g3.uniform() * (r0 + r1) < r0) y0 = jump(y0, g3);
      else y1 = jump(y1, g3);
      if (y0 == y1) break;
      if (std::min(y0, y1) <= lo || std::max(y0, y1) >= hi) {
        ++escaped;
        t = std::numeric_limits<double>::infinity();
        break;
      }
    }
    tau_c[std::size_t(rep)] = t;
  });
  r.escaped = escaped.load();
  if (r.escaped > 0) r.warnings.push_back(std::to_string(r.escaped) + " walks reached the window edge");

  const double M = double(replicas);
  double hits = 0;
  for (auto h : hit_first) hits += h;
  r.mc = hits / M;
  r.mc_se = std::sqrt(std::max(r.mc * (1 - r.mc), 1.0 / M) / M);
  r.hitting_pass = std::abs(r.mc - r.exact) <= 3 * r.mc_se;
  if (r.mc_se > 0.01) r.warnings.push_back("hitting probability SE " + std::to_string(r.mc_se) + " above 0.01");

  for (double t : t_grid) {
    double na = 0, nc = 0;
    for (long i = 0; i < replicas; ++i) {
      na += tau_a[std::size_t(i)] > t;
      nc += tau_c[std::size_t(i)] > t;
    }
    const double pa = na / M, pc = nc / M;
    r.hit_tail.push_back(pa);
    r.hit_tail_se.push_back(std::sqrt(pa * (1 - pa) / M));
    r.coal_tail.push_back(pc);
    r.coal_tail_se.push_back(std::sqrt(pc * (1 - pc) / M));
    r.coal_scaled.push_back(pc * std::sqrt(1 + t));
  }
  const std::size_t half = t_grid.size() / 2;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    r.envelope = std::max(r.envelope, r.coal_scaled[i]);
    if (i < half) {
      r.early_max = std::max(r.early_max, r.coal_scaled[i]);
    } else if (r.coal_scaled[i] >= r.late_max) {
      r.late_max = r.coal_scaled[i];
      r.late_max_se = r.coal_tail_se[i] * std::sqrt(1 + t_grid[i]);
    }
  }
  std::vector<double> xs, ys;
  for (std::size_t i = half; i < t_grid.size(); ++i)
    if (r.coal_tail[i] > 0) {
      xs.push_back(1 + t_grid[i]);
      ys.push_back(r.coal_tail[i]);
    }
  if (xs.size() >= 2) r.late_slope = loglog_fit(xs, ys).slope;
  r.coalescence_pass = r.late_max <= r.early_max + 3 * r.late_max_se;
  return r;
}

// ---- space-time correlations ---------------------------------------------------

struct SpaceTimeCorrelation {
  LatticeWindow window;
  double s = 0;
  long y = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> psi;  // [time][site]
  std::vector<double> sup, bound_ratio;  // sup_x |psi| and sup * N / (sqrt(s) + 1/sqrt(t-s))
};

/// psi_{s,t}(y;x) = Cov(eta_s(y), eta_t(x)) for t >= s: the data 1{x != y} phi_s(x,y) +
/// 1{x = y} rho_s(y)(1 - rho_s(y)) carried by the walk with rates N^2 xi (reservoirs absorb).
inline SpaceTimeCorrelation space_time_correlation(const Environment& env, const DiscreteProfile& rho_s,
                                                   const TwoPointField& phi_s, long y,
                                                   const std::vector<double>& t_grid) {
  const auto& w = env.window();
  require(rho_s.window == w && phi_s.window == w, "oracle", "profile or correlation window differs");
  require(std::abs(rho_s.t - phi_s.t) < 1e-12, "oracle", "profile and correlation at different times");
  require(w.contains(y), "oracle", "site y outside the window");
  const double s = rho_s.t;
  const long S = w.sites();
  const LineOperator op = LineOperator::build(env, double(w.N) * w.N);
  std::vector<double> v(std::size_t(S + 2), 0.0);
  for (long x = w.x_min; x <= w.x_max; ++x)
    v[std::size_t(w.index(x) + 1)] = x == y ? rho_s.at(y) * (1 - rho_s.at(y)) : phi_s.at(x, y);
  op.refresh_ghosts(v);
  SpaceTimeCorrelation out;
  out.window = w;
  out.s = s;
  out.y = y;
  double t_now = s;
  for (double t : t_grid) {
    require(t >= s, "oracle", "space-time correlation needs t >= s");
    require(t >= t_now, "oracle", "time grid must be increasing");
    if (t > t_now) {
      std::vector<double> acc(v.size(), 0.0);
      uniformize(
          v, op.lambda * (t - t_now), [&](std::vector<double>& in, std::vector<double>& o) { op.step(in, o); },
          [&](long, double pmf, double, const std::vector<double>& u) {
            for (std::size_t i = 0; i < u.size(); ++i) acc[i] += pmf * u[i];
          },
          1e-14);
      v.swap(acc);
      op.refresh_ghosts(v);
    }
    t_now = t;
    std::vector<double> psi(v.begin() + 1, v.end() - 1);
    double sup = 0;
    for (double p : psi) sup = std::max(sup, std::abs(p));
    out.times.push_back(t);
    out.psi.push_back(std::move(psi));
    out.sup.push_back(sup);
    out.bound_ratio.push_back(t > s ? sup * w.N / (std::sqrt(s) + 1 / std::sqrt(t - s)) : 0.0);
  }
  return out;
}

}  // namespace rcsep
