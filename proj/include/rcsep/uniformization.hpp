#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rcsep/environment.hpp"
#include "rcsep/error.hpp"

namespace rcsep {

/// Runs the uniformization series  e^{tQ} v = sum_k Pois(lambda t; k) P^k v,
/// P = I + Q/lambda, truncated once the Poisson tail is below `tol`.
/// `on_term(k, pmf_k, tail_k, w)` sees every iterate w = P^k v; tail_k = P(Pois > k)
/// gives the time integral  int_0^t e^{sQ} v ds = (1/lambda) sum_k tail_k P^k v.
/// Returns the number of terms used.
template <class Vec, class Step, class OnTerm>
long uniformize(Vec& w, double lambda_t, Step&& step, OnTerm&& on_term, double tol = 1e-12) {
  require(lambda_t >= 0 && std::isfinite(lambda_t), "oracle", "uniformization needs a finite rate");
  Vec next = w;
  double cum = 0;
  const double log_l = lambda_t > 0 ? std::log(lambda_t) : 0.0;
  // past mean + 14 sd the Poisson tail is far below double precision, whatever 1 - cum says
  const double k_cap = lambda_t + 14 * std::sqrt(lambda_t) + 50;
  for (long k = 0;; ++k) {
    double pmf;
    if (lambda_t == 0) pmf = k == 0 ? 1.0 : 0.0;
    else pmf = std::exp(-lambda_t + double(k) * log_l - std::lgamma(double(k) + 1));
    cum += pmf;
    const double tail = std::max(0.0, 1.0 - cum);
    on_term(k, pmf, tail, w);
    if (double(k) >= lambda_t && (tail < tol || double(k) >= k_cap)) return k + 1;
    require(k < 100000000L, "oracle", "uniformization series did not converge");
    step(w, next);
    std::swap(w, next);
  }
}

/// Nearest-neighbour symmetric generator on the window sites, stored with one ghost
/// cell on each side: a vector of length S+2 whose entry i+1 is site x_min+i.
/// Bond j joins cells j and j+1 with rate `rate[j]` = speed * xi_{x_min-1+j}.
/// Ghost cells hold fixed boundary values (reservoir densities, or 0 for absorption);
/// on a periodic window they mirror the opposite edge and the wrap bond is x_max.
struct LineOperator {
  long S = 0;
  bool periodic = false;
  std::vector<double> rate;
  double lambda = 0;

  static LineOperator build(const Environment& env, double speed) {
    LineOperator op;
    const auto& w = env.window();
    op.S = w.sites();
    op.periodic = w.boundary == Boundary::periodic;
    op.rate.resize(std::size_t(op.S + 1));
    for (long j = 0; j <= op.S; ++j) op.rate[std::size_t(j)] = speed * env.values()[std::size_t(j)];
    if (op.periodic) op.rate[0] = op.rate[std::size_t(op.S)];
    for (long i = 1; i <= op.S; ++i)
      op.lambda = std::max(op.lambda, op.rate[std::size_t(i - 1)] + op.rate[std::size_t(i)]);
    return op;
  }

  void refresh_ghosts(std::vector<double>& v) const {
    if (periodic) {
      v[0] = v[std::size_t(S)];
      v[std::size_t(S + 1)] = v[1];
    }
  }

  /// out = Q in on interior cells; ghosts of `out` copied from `in`.
  void generator(std::vector<double>& in, std::vector<double>& out) const {
    refresh_ghosts(in);
    const double* r = rate.data();
    const double* a = in.data();
    double* o = out.data();
    for (long i = 1; i <= S; ++i)
      o[i] = r[i] * (a[i + 1] - a[i]) + r[i - 1] * (a[i - 1] - a[i]);
    o[0] = a[0];
    o[S + 1] = a[S + 1];
  }

  /// out = (I + Q/lambda) in.
  void step(std::vector<double>& in, std::vector<double>& out) const {
    refresh_ghosts(in);
    const double inv = 1.0 / lambda;
    const double* r = rate.data();
    const double* a = in.data();
    double* o = out.data();
    for (long i = 1; i <= S; ++i)
      o[i] = a[i] + inv * (r[i] * (a[i + 1] - a[i]) + r[i - 1] * (a[i - 1] - a[i]));
    o[0] = a[0];
    o[S + 1] = a[S + 1];
  }
};

}  // namespace rcsep
