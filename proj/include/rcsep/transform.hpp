#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "rcsep/dynamics.hpp"
#include "rcsep/environment.hpp"
#include "rcsep/error.hpp"
#include "rcsep/functions.hpp"
#include "rcsep/pde.hpp"

namespace rcsep {

/// A shape sampled at x/N on every site of a window (plus the two sites just outside).
struct GridFunction {
  Shape shape;
  LatticeWindow window;
  std::vector<double> values;  // sites x_min-1 .. x_max+1
  long support_lo = 0, support_hi = 0;
  double truncation_radius = 0;  // Schwartz shapes only
  std::string smoothness;

  double at(long x) const { return values[std::size_t(x - window.x_min + 1)]; }
  int N() const { return window.N; }
};

inline GridFunction sample(const Shape& g, const LatticeWindow& w) {
  GridFunction f{g, w, {}, w.x_min - 1, w.x_max + 1, 0, g.smoothness_class()};
  const auto [lo, hi] = g.support();
  const bool schwartz = g.kind == Shape::Kind::gaussian;
  if (std::isfinite(lo)) f.support_lo = std::max(w.x_min - 1, long(std::floor(lo * w.N)));
  if (std::isfinite(hi)) f.support_hi = std::min(w.x_max + 1, long(std::ceil(hi * w.N)));
  if (schwartz) f.truncation_radius = 0.5 * (hi - lo);
  f.values.resize(std::size_t(w.sites() + 2));
  for (long x = w.x_min - 1; x <= w.x_max + 1; ++x) {
    const double u = double(x) / w.N;
    double v = g.value(u);
    if (schwartz && (u < lo || u > hi)) v = g.base;
    f.values[std::size_t(x - w.x_min + 1)] = v;
  }
  return f;
}

/// (T_xi G)(x) = sum_{j<x} xi_j^{-1} [G((j+1)/N) - G(j/N)] on window sites, and the full sum.
struct TransformT {
  LatticeWindow window;
  std::vector<double> values;  // sites x_min..x_max+1
  double total = 0;            // T_{xi,G}

  double at(long x) const { return values[std::size_t(x - window.x_min)]; }
};

inline TransformT apply_T(const Environment& env, const GridFunction& G) {
  const auto& w = env.window();
  require(G.window == w, "transform", "test function sampled on a different window");
  const double dl = G.at(w.x_min) - G.at(w.x_min - 1), dr = G.at(w.x_max + 1) - G.at(w.x_max);
  require(dl == 0 && dr == 0 && G.at(w.x_min) == G.at(w.x_min - 1), "transform",
          "test function varies at the window edge; enlarge the window");
  require(G.at(w.x_min) == 0, "transform", "test function must vanish at the left window edge");
  TransformT T{w, std::vector<double>(std::size_t(w.sites() + 1)), 0};
  double s = 0;
  for (long x = w.x_min; x <= w.x_max + 1; ++x) {
    T.values[std::size_t(x - w.x_min)] = s;  // sum over j < x
    if (x <= w.x_max) s += (G.at(x + 1) - G.at(x)) / env.xi(x);
  }
  T.total = s;
  return T;
}

/// T_{xi,l} G = T_xi G - (T_{xi,G} / T_{xi,g}) T_xi g_l with the ramp g_l over [0, l].
struct TransformedFunction {
  GridFunction base;
  double l = 1;
  std::vector<double> values;  // sites x_min-1 .. x_max+1 (zero outside the window)
  double T_G = 0, T_g = 0, ratio = 0;
  double gamma = 1;        // the gamma used in the l1 distance
  double l1_distance = 0;  // (1/N) sum_x |T_{xi,l}G(x) - gamma G(x/N)|

  double at(long x) const { return values[std::size_t(x - base.window.x_min + 1)]; }
};

enum class Cutoff { fixed, quarter_power };

struct CutoffConvention {
  Cutoff kind = Cutoff::fixed;
  double l = 1.0;
  /// Macroscopic ramp width used at scaling parameter N.
  double width(int N) const { return kind == Cutoff::fixed ? l : std::pow(double(N), 0.25); }
  std::string describe() const {
    return kind == Cutoff::fixed ? "fixed:" + std::to_string(l) : std::string("quarter-power");
  }
};

inline CutoffConvention parse_cutoff(const std::string& s) {
  if (s == "quarter-power") return {Cutoff::quarter_power, 0};
  if (s.rfind("fixed:", 0) == 0) {
    const double l = std::stod(s.substr(6));
    require(l > 0, "transform", "cutoff width must be positive");
    return {Cutoff::fixed, l};
  }
  throw Error("transform", "unknown cutoff convention '" + s + "' (use fixed:<l> or quarter-power)");
}

inline TransformedFunction apply_Tl(const Environment& env, const GridFunction& G, double l,
                                    double gamma = -1) {
  require(l > 0, "transform", "cutoff width must be positive");
  const auto& w = env.window();
  require(std::ceil(l * w.N) < double(w.x_max), "transform", "cutoff ramp extends past the window");
  const TransformT TG = apply_T(env, G);
  const GridFunction g = sample(Shape::ramp(l), w);
  // T_xi g_l: g_l vanishes at the left edge and is flat at the right edge
  TransformT Tg{w, std::vector<double>(std::size_t(w.sites() + 1)), 0};
  double s = 0;
  for (long x = w.x_min; x <= w.x_max + 1; ++x) {
    Tg.values[std::size_t(x - w.x_min)] = s;
    if (x <= w.x_max) s += (g.at(x + 1) - g.at(x)) / env.xi(x);
  }
  Tg.total = s;
  require(Tg.total != 0 && std::isfinite(Tg.total), "transform", "T_{xi,g} vanishes; corrupt environment");

  TransformedFunction F;
  F.base = G;
  F.l = l;
  F.T_G = TG.total;
  F.T_g = Tg.total;
  F.ratio = TG.total / Tg.total;
  F.gamma = gamma > 0 ? gamma : env.gamma_hat();
  F.values.assign(std::size_t(w.sites() + 2), 0.0);
  double l1 = 0;
  for (long x = w.x_min; x <= w.x_max; ++x) {
    const double v = TG.at(x) - F.ratio * Tg.at(x);
    F.values[std::size_t(x - w.x_min + 1)] = v;
    l1 += std::abs(v - F.gamma * G.at(x));
  }
  F.l1_distance = l1 / w.N;
  return F;
}

/// max_x | N (T_xi G(x+1) - T_xi G(x)) xi_x - N (G((x+1)/N) - G(x/N)) |.
inline double summation_by_parts_residual(const Environment& env, const GridFunction& G) {
  const auto T = apply_T(env, G);
  const auto& w = env.window();
  const double N = w.N;
  double r = 0;
  for (long x = w.x_min; x <= w.x_max; ++x) {
    const double lhs = N * (T.at(x + 1) - T.at(x)) * env.xi(x);
    const double rhs = N * (G.at(x + 1) - G.at(x));
    r = std::max(r, std::abs(lhs - rhs));
  }
  return r;
}

struct CorrectedFields {
  double X = 0;  // (1/N) sum T_{xi,l}G(x) eta(x)
  double Z = 0;  // (1/(gamma sqrt N)) sum T_{xi,l}G(x) (eta(x) - rho(x))
};

inline CorrectedFields corrected_fields(const TransformedFunction& F, const Configuration& c,
                                        const DiscreteProfile* rho = nullptr) {
  const auto& w = F.base.window;
  require(c.window == w, "transform", "configuration window differs from the transform window");
  if (rho) require(rho->window == w, "transform", "profile window differs from the transform window");
  CorrectedFields out;
  double z = 0;
  for (long x = w.x_min; x <= w.x_max; ++x) {
    const double e = c.occupied(x) ? 1.0 : 0.0;
    out.X += F.at(x) * e;
    if (rho) z += F.at(x) * (e - rho->at(x));
  }
  out.X /= w.N;
  out.Z = z / (F.gamma * std::sqrt(double(w.N)));
  return out;
}

/// (1/sqrt N) sum_x G(x/N) (eta(x) - rho(x)).
inline double fluctuation_field(const GridFunction& G, const Configuration& c, const DiscreteProfile& rho) {
  const auto& w = G.window;
  double s = 0;
  for (long x = w.x_min; x <= w.x_max; ++x) s += G.at(x) * ((c.occupied(x) ? 1.0 : 0.0) - rho.at(x));
  return s / std::sqrt(double(w.N));
}

/// Pathwise gap |gamma <pi, G> - X(G)| and its bound (1/N) sum |gamma G - T_{xi,l} G|.
inline std::pair<double, double> pathwise_gap(const TransformedFunction& F, const Configuration& c) {
  const auto& w = F.base.window;
  double gap = 0;
  for (long x = w.x_min; x <= w.x_max; ++x)
    if (c.occupied(x)) gap += F.gamma * F.base.at(x) - F.at(x);
  return {std::abs(gap) / w.N, F.l1_distance};
}

// ---- observable builders ------------------------------------------------------

inline std::vector<double> window_weights(const GridFunction& G) {
  const auto& w = G.window;
  std::vector<double> v(std::size_t(w.sites()));
  for (long x = w.x_min; x <= w.x_max; ++x) v[std::size_t(w.index(x))] = G.at(x);
  return v;
}

/// <pi^N_t, G> = (1/N) sum G(x/N) eta(x).
inline LinearObservable empirical_observable(const std::string& name, const GridFunction& G) {
  return {name, window_weights(G), 1.0 / G.window.N, {}};
}

/// Y^N_t(G) centred by the discrete profiles at the sample times.
inline LinearObservable fluctuation_observable(const std::string& name, const GridFunction& G,
                                               const std::vector<DiscreteProfile>& rho) {
  LinearObservable o{name, window_weights(G), 1.0 / std::sqrt(double(G.window.N)), {}};
  for (const auto& p : rho) {
    double s = 0;
    for (std::size_t i = 0; i < o.weights.size(); ++i) s += o.weights[i] * p.values[i];
    o.centering.push_back(s);
  }
  return o;
}

/// X^N_t(G) = (1/N) sum T_{xi,l}G(x) eta(x).
inline LinearObservable corrected_observable(const std::string& name, const TransformedFunction& F) {
  const auto& w = F.base.window;
  std::vector<double> v(std::size_t(w.sites()));
  for (long x = w.x_min; x <= w.x_max; ++x) v[std::size_t(w.index(x))] = F.at(x);
  return {name, v, 1.0 / w.N, {}};
}

/// Z^N_t(G) = gamma^{-1} Y^N_t(T_{xi,l} G).
inline LinearObservable corrected_fluctuation_observable(const std::string& name, const TransformedFunction& F,
                                                         const std::vector<DiscreteProfile>& rho) {
  LinearObservable o = corrected_observable(name, F);
  o.scale = 1.0 / (F.gamma * std::sqrt(double(F.base.window.N)));
  for (const auto& p : rho) {
    double s = 0;
    for (std::size_t i = 0; i < o.weights.size(); ++i) s += o.weights[i] * p.values[i];
    o.centering.push_back(s);
  }
  return o;
}

/// Drift and quadratic-variation integrands of X^N(G) = (1/N) sum F(x) eta(x), F = T_{xi,l}G:
///   L X = sum_x a(x) eta(x),  a(x) = N [xi_x (F(x+1)-F(x)) - xi_{x-1} (F(x)-F(x-1))],
///   d<M>/dt = sum_x xi_x (F(x+1)-F(x))^2 1{eta(x) != eta(x+1)}.
/// By the summation-by-parts identity a = (1/N)(Delta_N G - c Delta_N g_l).
inline IntegralObservable martingale_integrands(const std::string& name, const Environment& env,
                                                const TransformedFunction& F) {
  const auto& w = env.window();
  const double N = w.N;
  IntegralObservable o{name, std::vector<double>(std::size_t(w.sites())),
                       std::vector<double>(std::size_t(w.sites() + 1))};
  for (long x = w.x_min; x <= w.x_max; ++x)
    o.site_weights[std::size_t(w.index(x))] =
        N * (env.xi(x) * (F.at(x + 1) - F.at(x)) - env.xi(x - 1) * (F.at(x) - F.at(x - 1)));
  for (long b = w.x_min - 1; b <= w.x_max; ++b) {
    const double d = F.at(b + 1) - F.at(b);
    o.bond_weights[std::size_t(b - w.x_min + 1)] = env.xi(b) * d * d;
  }
  return o;
}

inline void write_transform_csv(std::ostream& os, const Environment& env, const TransformedFunction& F) {
  const auto T = apply_T(env, F.base);
  os << "x,G,T_xi_G,T_xi_l_G\n";
  const auto& w = F.base.window;
  for (long x = w.x_min; x <= w.x_max; ++x)
    os << x << ',' << F.base.at(x) << ',' << T.at(x) << ',' << F.at(x) << '\n';
}

}  // namespace rcsep
