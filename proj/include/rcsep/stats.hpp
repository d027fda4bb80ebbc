#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rcsep/dynamics.hpp"
#include "rcsep/error.hpp"
#include "rcsep/functions.hpp"
#include "rcsep/oracle.hpp"
#include "rcsep/pde.hpp"
#include "rcsep/rng.hpp"

namespace rcsep {

struct Estimate {
  double value = 0;
  double se = 0;
};

/// Leave-one-out jackknife for an estimator that depends on the data only through
/// per-replica sums: `contrib[i]` is replica i's contribution vector and
/// `f(sums, count)` evaluates the estimator.
template <class F>
Estimate jackknife(const std::vector<std::vector<double>>& contrib, F&& f) {
  const std::size_t M = contrib.size();
  require(M >= 2, "stats", "jackknife needs at least two replicas");
  const std::size_t k = contrib.front().size();
  std::vector<double> total(k, 0.0), loo(k);
  for (const auto& c : contrib)
    for (std::size_t j = 0; j < k; ++j) total[j] += c[j];
  Estimate e;
  e.value = f(total, double(M));
  std::vector<double> vals(M);
  double mean = 0;
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < k; ++j) loo[j] = total[j] - contrib[i][j];
    vals[i] = f(loo, double(M - 1));
    mean += vals[i];
  }
  mean /= double(M);
  double ss = 0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  e.se = std::sqrt(double(M - 1) / double(M) * ss);
  return e;
}

inline Estimate mean_estimate(const std::vector<double>& x) {
  require(x.size() >= 2, "stats", "need at least two samples");
  double m = 0;
  for (double v : x) m += v;
  m /= double(x.size());
  double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / double(x.size() - 1) / double(x.size()))};
}

struct CovarianceEstimate {
  std::vector<std::string> labels;
  long M = 0;
  int N = 0;
  std::uint64_t env_seed = 0;
  std::vector<double> mean, mean_se;
  std::vector<std::vector<double>> cov, cov_se;

  std::size_t index(const std::string& label) const {
    const auto it = std::find(labels.begin(), labels.end(), label);
    require(it != labels.end(), "stats", "unknown observable '" + label + "'");
    return std::size_t(it - labels.begin());
  }
};

/// Sample means and covariances of the columns of samples[replica][observable], with
/// closed-form leave-one-out jackknife standard errors.
inline CovarianceEstimate estimate_covariance(const std::vector<std::vector<double>>& samples,
                                              const std::vector<std::string>& labels,
                                              const std::vector<std::uint64_t>& env_seeds, int N) {
  const std::size_t M = samples.size();
  require(M >= 2, "stats", "covariance needs at least two replicas");
  require(env_seeds.size() == M, "stats", "one environment seed per replica expected");
  for (auto s : env_seeds)
    require(s == env_seeds.front(), "stats", "replicas from different environment seeds cannot be pooled");
  const std::size_t k = labels.size();
  for (const auto& row : samples) require(row.size() == k, "stats", "sample row has the wrong length");

  CovarianceEstimate c;
  c.labels = labels;
  c.M = long(M);
  c.N = N;
  c.env_seed = env_seeds.front();
  c.mean.assign(k, 0.0);
  for (const auto& row : samples)
    for (std::size_t j = 0; j < k; ++j) c.mean[j] += row[j];
  for (auto& m : c.mean) m /= double(M);
  c.cov.assign(k, std::vector<double>(k, 0.0));
  c.cov_se.assign(k, std::vector<double>(k, 0.0));
  c.mean_se.assign(k, 0.0);

  // centred data keeps the leave-one-out sums free of cancellation
  std::vector<std::vector<double>> d(M, std::vector<double>(k));
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < k; ++j) d[i][j] = samples[i][j] - c.mean[j];
  const double m = double(M);
  const double div = M >= 3 ? m - 1 : m, div_loo = M >= 3 ? m - 2 : m - 1;
  for (std::size_t a = 0; a < k; ++a) {
    double ssa = 0;
    for (std::size_t i = 0; i < M; ++i) ssa += d[i][a] * d[i][a];
    c.mean_se[a] = std::sqrt(ssa / (m - 1) / m);
    for (std::size_t b = a; b < k; ++b) {
      double sab = 0;
      for (std::size_t i = 0; i < M; ++i) sab += d[i][a] * d[i][b];
      c.cov[a][b] = c.cov[b][a] = sab / div;
      // leave-one-out: sums over j != i of the centred data
      double mean_loo = 0, ss_loo = 0;
      std::vector<double> loo(M);
      for (std::size_t i = 0; i < M; ++i) {
        const double sa = -d[i][a], sb = -d[i][b];  // sum_{j != i} d_j = -d_i
        const double p = sab - d[i][a] * d[i][b];
        loo[i] = (p - sa * sb / (m - 1)) / div_loo;
        mean_loo += loo[i];
      }
      mean_loo /= m;
      for (double v : loo) ss_loo += (v - mean_loo) * (v - mean_loo);
      c.cov_se[a][b] = c.cov_se[b][a] = std::sqrt((m - 1) / m * ss_loo);
    }
  }
  return c;
}

/// Picks one recorded number out of an ObservableSeries.
struct SeriesSelector {
  enum class Kind { linear, current, tagged, drift, qv };
  Kind kind = Kind::linear;
  std::size_t index = 0;  // observable / bond slot
  std::size_t time = 0;   // sample-time index
  std::string label;
  double scale = 1;

  double operator()(const ObservableSeries& s) const {
    switch (kind) {
      case Kind::linear: return scale * s.linear.at(index).at(time);
      case Kind::current: return scale * double(s.currents.at(index).at(time));
      case Kind::tagged: return scale * double(s.tagged.at(time));
      case Kind::drift: return scale * s.drift_integral.at(index).at(time);
      case Kind::qv: return scale * s.qv_integral.at(index).at(time);
    }
    return 0;
  }
};

inline CovarianceEstimate estimate_covariance(const std::vector<ObservableSeries>& batch,
                                              const std::vector<SeriesSelector>& sel) {
  std::vector<std::vector<double>> samples;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> labels;
  for (const auto& s : sel) labels.push_back(s.label);
  for (const auto& s : batch) {
    std::vector<double> row;
    for (const auto& f : sel) row.push_back(f(s));
    samples.push_back(std::move(row));
    seeds.push_back(s.env_seed);
  }
  require(!batch.empty(), "stats", "empty batch");
  return estimate_covariance(samples, labels, seeds, batch.front().window.N);
}

// ---- quadrature ------------------------------------------------------------

namespace detail {

inline std::vector<double> kinks(const Shape& f) {
  switch (f.kind) {
    case Shape::Kind::constant: return {};
    case Shape::Kind::tanh:
    case Shape::Kind::gaussian: return {f.center};
    case Shape::Kind::bump: return {f.center - f.width, f.center, f.center + f.width};
    default: return {f.center, f.center + f.width};
  }
}

/// Adaptive Gauss-Kronrod over [a,b] split at the given interior points.
template <class F>
SemigroupValue integrate_pieces(F&& f, double a, double b, std::vector<double> pts, double tol) {
  pts.push_back(a);
  pts.push_back(b);
  for (auto& p : pts) p = std::clamp(p, a, b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  SemigroupValue out;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (pts[i + 1] - pts[i] <= 0) continue;
    double err = 0;
    out.value += boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, pts[i], pts[i + 1], 15, tol, &err);
    out.error += std::abs(err);
  }
  return out;
}

inline std::vector<double> spread(const std::vector<double>& centres, double sigma) {
  std::vector<double> p;
  for (double c : centres)
    for (double k : {-10.0, -3.0, 0.0, 3.0, 10.0}) p.push_back(c + k * sigma);
  return p;
}

inline double chi(double a) { return a * (1 - a); }

}  // namespace detail

struct TheoryCovariance {
  std::string formula;  // density, current, tagged
  double gamma = 1;
  Shape profile;
  double s = 0, t = 0;
  Shape G, H;
  double value = 0;
  double error = 0;
  std::vector<double> terms;
};

inline void check_times(double s, double t) {
  require(s >= 0 && s <= t, "stats", "covariance formulas need 0 <= s <= t");
}

/// int chi(rho0) T_s G T_t H + (2/gamma) int_0^s dr int chi(rho(r)) grad T_{s-r} G grad T_{t-r} H.
/// G and H must have bounded support (compact or Gaussian).
inline TheoryCovariance theory_density_covariance(double gamma, const Shape& rho0, double s, double t, const Shape& G,
                                                  const Shape& H, double tol = 1e-10) {
  check_times(s, t);
  rho0.validate_profile();
  TheoryCovariance c{"density", gamma, rho0, s, t, G, H, 0, 0, {}};
  const auto sg = G.support(), sh = H.support();
  require(std::isfinite(sg.first) && std::isfinite(sh.first) && std::isfinite(sg.second) && std::isfinite(sh.second),
          "stats", "test functions must have bounded support");
  const double sig_t = std::sqrt(2 * t / gamma);
  const double lo = std::min(sg.first, sh.first) - 12 * sig_t - 1e-9;
  const double hi = std::max(sg.second, sh.second) + 12 * sig_t + 1e-9;
  std::vector<double> base = detail::kinks(G);
  for (double k : detail::kinks(H)) base.push_back(k);
  for (double k : detail::kinks(rho0)) base.push_back(k);

  double qerr = 0;
  auto f1 = [&](double v) {
    const auto a = heat_apply(G, s, gamma, v), b = heat_apply(H, t, gamma, v);
    qerr = std::max({qerr, a.error, b.error});
    return detail::chi(rho0.value(v)) * a.value * b.value;
  };
  auto pts1 = detail::spread(base, std::sqrt(2 * s / gamma));
  for (double p : detail::spread(base, sig_t)) pts1.push_back(p);
  const auto t1 = detail::integrate_pieces(f1, lo, hi, pts1, tol);

  SemigroupValue t2;
  if (s > 0) {
    double inner_err = 0;
    auto outer = [&](double w) {
      const double r = s - w * w;
      if (w == 0) return 0.0;  // integrable endpoint; the 2w Jacobian kills it
      const double sig = std::sqrt(2 * (s - r) / gamma);
      auto inner = [&](double v) {
        const auto a = heat_gradient(G, s - r, gamma, v), b = heat_gradient(H, t - r, gamma, v);
        const auto rr = heat_apply(rho0, r, gamma, v);
        qerr = std::max({qerr, a.error, b.error, rr.error});
        return detail::chi(rr.value) * a.value * b.value;
      };
      const auto in = detail::integrate_pieces(inner, lo, hi, detail::spread(base, sig), tol);
      inner_err = std::max(inner_err, in.error);
      return 2 * w * in.value;
    };
    t2 = detail::integrate_pieces(outer, 0.0, std::sqrt(s), {}, tol);
    t2.value *= 2 / gamma;
    t2.error = 2 / gamma * (t2.error + std::sqrt(s) * 2 * std::sqrt(s) * inner_err);
  }
  c.terms = {t1.value, t2.value};
  c.value = t1.value + t2.value;
  c.error = t1.error + t2.error + qerr * (hi - lo);
  return c;
}

namespace detail {

/// The three-term formula shared by the current (u = 0) and the tagged particle:
/// int_{-inf}^0 P[Z_s <= v] P[Z_t <= v] chi(rho0) + int_0^inf P[Z_s >= v] P[Z_t >= v] chi(rho0)
/// + (2/gamma) int_0^s dr int p_{t-r}(u_t, v) p_{s-r}(u_s, v) chi(rho(r, v)) dv,
/// with Z_t = u_t + N(0, 2t/gamma).
inline std::vector<SemigroupValue> three_term(double gamma, const Shape& rho0, double s, double t, double us,
                                              double ut, double tol) {
  const double ss = std::sqrt(2 * s / gamma), st = std::sqrt(2 * t / gamma);
  auto cdf = [](double x, double sig) { return sig > 0 ? normal_cdf(x / sig) : (x >= 0 ? 1.0 : 0.0); };
  std::vector<double> pts = spread({us, ut}, ss);
  for (double p : spread({us, ut, 0.0}, st)) pts.push_back(p);
  for (double k : kinks(rho0)) pts.push_back(k);
  const double lo = std::min({us, ut, 0.0}) - 14 * st - 1e-9, hi = std::max({us, ut, 0.0}) + 14 * st + 1e-9;
  double qerr = 0;
  SemigroupValue a, b, c;
  if (t > 0) {
    a = integrate_pieces([&](double v) { return cdf(v - us, ss) * cdf(v - ut, st) * chi(rho0.value(v)); },
                         std::min(lo, 0.0), 0.0, pts, tol);
    b = integrate_pieces([&](double v) { return cdf(us - v, ss) * cdf(ut - v, st) * chi(rho0.value(v)); }, 0.0,
                         std::max(hi, 0.0), pts, tol);
  }
  if (s > 0) {
    auto outer = [&](double w) {
      if (w == 0 && t > s) return 0.0;
      if (w == 0) {
        // limit of 2w * int p_{w^2}^2 chi: 2w / (2 sqrt(pi) sigma_{w^2}) -> sqrt(gamma / (2 pi)) chi(rho(s, u_s))
        const auto r = heat_apply(rho0, s, gamma, us);
        return std::sqrt(gamma / (2 * M_PI)) * chi(r.value);
      }
      const double r = s - w * w;
      const double sig = std::sqrt(2 * (s - r) / gamma), sig2 = std::sqrt(2 * (t - r) / gamma);
      auto inner = [&](double z) {
        const double v = us + sig * z;
        const auto rr = heat_apply(rho0, r, gamma, v);
        qerr = std::max(qerr, rr.error);
        return normal_pdf(z) * normal_pdf((v - ut) / sig2) / sig2 * chi(rr.value);
      };
      const auto in = integrate_pieces(inner, -10.0, 10.0, {0.0, (ut - us) / sig}, tol);
      qerr = std::max(qerr, in.error);
      return 2 * w * in.value;
    };
    c = integrate_pieces(outer, 0.0, std::sqrt(s), {}, tol);
    c.value *= 2 / gamma;
    c.error = 2 / gamma * (c.error + 2 * s * qerr);
  }
  return {a, b, c};
}

}  // namespace detail

/// Limiting covariance of (J_{-1,0}(s) - E J_{-1,0}(s)) / sqrt(N) and the same at t.
inline TheoryCovariance theory_current_covariance(double gamma, const Shape& rho0, double s, double t,
                                                  double tol = 1e-11) {
  check_times(s, t);
  rho0.validate_profile();
  TheoryCovariance c{"current", gamma, rho0, s, t, Shape::constant(0), Shape::constant(0), 0, 0, {}};
  const auto parts = detail::three_term(gamma, rho0, s, t, 0.0, 0.0, tol);
  for (const auto& p : parts) {
    c.terms.push_back(p.value);
    c.value += p.value;
    c.error += p.error;
  }
  return c;
}

/// The current covariance through Y_t(G_n) - Y_0(G_n) with tents G_n = (1 - u/n)^+ on
/// [0, n): the density formula gives int chi(rho0)(T_s G_n - G_n)(T_t G_n - G_n) plus
/// the gradient term; the O(1/n) error is removed by Richardson extrapolation.
inline TheoryCovariance theory_current_covariance_dual(double gamma, const Shape& rho0, double s, double t,
                                                       double n0 = 16, double tol = 1e-8) {
  check_times(s, t);
  rho0.validate_profile();
  auto at_n = [&](double n) {
    const Shape G = Shape::tent(n);
    const double sig_t = std::sqrt(2 * t / gamma);
    const double lo = -14 * sig_t - 1e-9, hi = n + 14 * sig_t + 1e-9;
    std::vector<double> base = {0.0, n};
    for (double k : detail::kinks(rho0)) base.push_back(k);
    auto pts = detail::spread(base, std::sqrt(2 * s / gamma));
    for (double p : detail::spread(base, sig_t)) pts.push_back(p);
    SemigroupValue total;
    if (s > 0) {
      const auto t1 = detail::integrate_pieces(
          [&](double v) {
            const double g = G.value(v);
            return detail::chi(rho0.value(v)) * (heat_apply(G, s, gamma, v).value - g) *
                   (heat_apply(G, t, gamma, v).value - g);
          },
          lo, hi, pts, tol);
      double inner_err = 0;
      auto outer = [&](double w) {
        const double r = s - w * w;
        if (w == 0) {
          if (t > s) return 0.0;
          const auto rr = heat_apply(rho0, s, gamma, 0.0);
          return std::sqrt(gamma / (2 * M_PI)) * detail::chi(rr.value);
        }
        const double sig = std::sqrt(2 * (s - r) / gamma);
        auto inner = [&](double v) {
          return detail::chi(heat_apply(rho0, r, gamma, v).value) * heat_gradient(G, s - r, gamma, v).value *
                 heat_gradient(G, t - r, gamma, v).value;
        };
        const auto in = detail::integrate_pieces(inner, -14 * sig_t - 1e-9, hi, detail::spread(base, sig), tol);
        inner_err = std::max(inner_err, in.error);
        return 2 * w * in.value;
      };
      auto t2 = detail::integrate_pieces(outer, 0.0, std::sqrt(s), {}, tol);
      total.value = t1.value + 2 / gamma * t2.value;
      total.error = t1.error + 2 / gamma * (t2.error + 2 * s * inner_err);
    }
    return total;
  };
  const auto c1 = at_n(n0), c2 = at_n(2 * n0), c4 = at_n(4 * n0);
  const double r1 = 2 * c2.value - c1.value, r2 = 2 * c4.value - c2.value;
  TheoryCovariance c{"current-dual", gamma, rho0, s, t, Shape::tent(n0), Shape::tent(n0), 0, 0, {}};
  c.value = (4 * r2 - r1) / 3;
  c.terms = {c1.value, c2.value, c4.value};
  c.error = c1.error + c2.error + c4.error + std::abs(c.value - r2);
  return c;
}

/// Limiting covariance of W_s and W_t for W^N = (X^N - u^N) / sqrt(N), from the
/// three-term formula centred at u_s, u_t and divided by rho(s,u_s) rho(t,u_t).
inline TheoryCovariance theory_tagged_covariance(double gamma, const Shape& rho0, double s, double t,
                                                 double tol = 1e-11, double vacuum = 1e-6) {
  check_times(s, t);
  rho0.validate_profile();
  TheoryCovariance c{"tagged", gamma, rho0, s, t, Shape::constant(0), Shape::constant(0), 0, 0, {}};
  std::vector<double> grid;
  if (s > 0) grid.push_back(s);
  if (t > s) grid.push_back(t);
  double us = 0, ut = 0;
  if (!grid.empty()) {
    const auto u = compute_ut(gamma, rho0, grid);
    if (s > 0) us = u.u_ode.front();
    ut = u.u_ode.back();
  }
  const double rs = heat_apply(rho0, s, gamma, us).value, rt = heat_apply(rho0, t, gamma, ut).value;
  require(rs > vacuum && rt > vacuum, "stats", "density at the tagged centring is below the vacuum threshold");
  const auto parts = detail::three_term(gamma, rho0, s, t, us, ut, tol);
  for (const auto& p : parts) {
    c.terms.push_back(p.value);
    c.value += p.value;
    c.error += p.error;
  }
  c.value /= rs * rt;
  c.error /= rs * rt;
  c.terms.push_back(us);
  c.terms.push_back(ut);
  return c;
}

// ---- Gaussianity --------------------------------------------------------------

/// P(K > lambda) for the Kolmogorov distribution.
inline double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    s += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

struct ShapeTestReport {
  long M = 0;
  double ks_distance = 0;
  double p_value = 0;
  double skewness = 0, skewness_se = 0;
  double excess_kurtosis = 0, kurtosis_se = 0;
  double level = 0.01;
  bool pass = false;
};

/// Kolmogorov-Smirnov distance of (x - mean) / sqrt(theory_variance) to N(0,1), with
/// skewness and excess kurtosis as diagnostics. Lattice-valued samples are spread by a
/// uniform jitter of one lattice step (variance step^2/12 added to the theory).
inline ShapeTestReport clt_shape_test(std::vector<double> x, double theory_variance, double lattice_step = 0,
                                      std::uint64_t seed = 0x5A5E, double level = 0.01) {
  const std::size_t M = x.size();
  require(M >= 2000, "stats", "shape test needs at least 2000 samples");
  require(theory_variance > 0 && std::isfinite(theory_variance), "stats", "theory variance must be positive");
  double mean = 0;
  for (double v : x) mean += v;
  mean /= double(M);
  double m2 = 0;
  for (double v : x) m2 += (v - mean) * (v - mean);
  require(m2 > 0, "stats", "samples have zero variance");
  double var = theory_variance;
  if (lattice_step > 0) {
    RandomStream rng(seed, 0x717E5);
    for (auto& v : x) v += lattice_step * (rng.uniform() - 0.5);
    var += lattice_step * lattice_step / 12;
    mean = 0;
    for (double v : x) mean += v;
    mean /= double(M);
  }
  const double sd = std::sqrt(var);
  std::vector<double> z(M);
  double s2 = 0, s3 = 0, s4 = 0;
  for (std::size_t i = 0; i < M; ++i) {
    const double d = x[i] - mean;
    z[i] = d / sd;
    s2 += d * d;
    s3 += d * d * d;
    s4 += d * d * d * d;
  }
  std::sort(z.begin(), z.end());
  double D = 0;
  for (std::size_t i = 0; i < M; ++i) {
    const double F = normal_cdf(z[i]);
    D = std::max({D, double(i + 1) / double(M) - F, F - double(i) / double(M)});
  }
  ShapeTestReport r;
  r.M = long(M);
  r.level = level;
  r.ks_distance = D;
  const double sq = std::sqrt(double(M));
  r.p_value = kolmogorov_tail((sq + 0.12 + 0.11 / sq) * D);
  const double m = double(M);
  s2 /= m;
  r.skewness = (s3 / m) / std::pow(s2, 1.5);
  r.excess_kurtosis = (s4 / m) / (s2 * s2) - 3;
  r.skewness_se = std::sqrt(6.0 / m);
  r.kurtosis_se = std::sqrt(24.0 / m);
  r.pass = r.p_value >= level;
  return r;
}

}  // namespace rcsep
