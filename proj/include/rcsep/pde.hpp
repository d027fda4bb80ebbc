#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "rcsep/environment.hpp"
#include "rcsep/error.hpp"
#include "rcsep/functions.hpp"
#include "rcsep/uniformization.hpp"

namespace rcsep {

/// rho_t^N on the window at one time. `flux` is
/// Q(t) = xi_{-1} N^2 int_0^t (rho_s(-1) - rho_s(0)) ds, the mean current over bond (-1,0).
struct DiscreteProfile {
  LatticeWindow window;
  double t = 0;
  std::vector<double> values;
  bool starred = false;
  double flux = 0;

  double at(long x) const { return values[std::size_t(window.index(x))]; }
};

struct DiscreteTrajectory {
  std::vector<DiscreteProfile> profiles;
  std::vector<double> gradient_sup;  // sup_x |grad_N rho_t| per grid time, boundary bonds included
  std::vector<double> h_sup;         // sup_x |xi_x grad_N rho_t(x)|
  double gradient0 = 0, h0 = 0;      // the same at t = 0
  double ghost_left = 0, ghost_right = 0;
  double min0 = 0, max0 = 0;
  double max_principle_violation = 0;
  const char* method = "";
  long terms = 0;
};

enum class DiscreteMethod { automatic, uniformization, explicit_rk4 };

namespace detail {
inline void gradient_diagnostics(const Environment& env, const std::vector<double>& ext, bool periodic,
                                 double& grad, double& h) {
  const long S = env.window().sites();
  const double N = env.N();
  grad = 0;
  h = 0;
  for (long j = periodic ? 1 : 0; j <= S; ++j) {
    const double right = (periodic && j == S) ? ext[1] : ext[std::size_t(j + 1)];
    const double g = N * (right - ext[std::size_t(j)]);
    grad = std::max(grad, std::abs(g));
    h = std::max(h, std::abs(env.values()[std::size_t(j)] * g));
  }
}
}  // namespace detail

/// Integrates d rho(x)/dt = N { xi_x grad_N rho(x) - xi_{x-1} grad_N rho(x-1) } from
/// rho_0(x) = rho0(x/N) (origin set to 1 when starred). A frozen buffer holds the two
/// reservoir sites at rho0((x_min-1)/N) and rho0((x_max+1)/N).
inline DiscreteTrajectory solve_discrete(const Environment& env, const Shape& rho0,
                                         const std::vector<double>& t_grid, bool starred,
                                         DiscreteMethod method = DiscreteMethod::automatic,
                                         double tol = 1e-12) {
  rho0.validate_profile();
  const auto& win = env.window();
  const long S = win.sites();
  const double N = win.N;
  for (std::size_t k = 0; k < t_grid.size(); ++k)
    require(t_grid[k] >= 0 && (k == 0 || t_grid[k] > t_grid[k - 1]), "pde",
            "time grid must be non-negative and strictly increasing");
  if (method == DiscreteMethod::automatic)
    method = S <= 4096 ? DiscreteMethod::uniformization : DiscreteMethod::explicit_rk4;

  const LineOperator op = LineOperator::build(env, N * N);
  std::vector<double> ext(std::size_t(S + 2));
  for (long i = 0; i < S; ++i) ext[std::size_t(i + 1)] = rho0.value(double(win.x_min + i) / N);
  if (starred) ext[std::size_t(win.index(0) + 1)] = 1.0;
  ext[0] = rho0.value(double(win.x_min - 1) / N);
  ext[std::size_t(S + 1)] = rho0.value(double(win.x_max + 1) / N);
  op.refresh_ghosts(ext);

  DiscreteTrajectory traj;
  traj.ghost_left = ext[0];
  traj.ghost_right = ext[std::size_t(S + 1)];
  traj.min0 = *std::min_element(ext.begin(), ext.end());
  traj.max0 = *std::max_element(ext.begin(), ext.end());
  traj.method = method == DiscreteMethod::uniformization ? "uniformization" : "explicit-rk4";
  detail::gradient_diagnostics(env, ext, op.periodic, traj.gradient0, traj.h0);

  const std::size_t im1 = std::size_t(win.index(-1) + 1), i0 = std::size_t(win.index(0) + 1);
  const double xi_m1 = env.xi(-1);
  double flux = 0, t_now = 0;

  auto record = [&](double t) {
    DiscreteProfile p{win, t, std::vector<double>(ext.begin() + 1, ext.end() - 1), starred, flux};
    double g, h;
    detail::gradient_diagnostics(env, ext, op.periodic, g, h);
    traj.gradient_sup.push_back(g);
    traj.h_sup.push_back(h);
    for (double v : p.values)
      traj.max_principle_violation =
          std::max({traj.max_principle_violation, traj.min0 - v, v - traj.max0});
    traj.profiles.push_back(std::move(p));
  };

  for (double t : t_grid) {
    const double dt = t - t_now;
    if (dt > 0 && method == DiscreteMethod::uniformization) {
      std::vector<double> acc(ext.size(), 0.0);
      double int_m1 = 0, int_0 = 0;
      traj.terms += uniformize(
          ext, op.lambda * dt, [&](std::vector<double>& in, std::vector<double>& out) { op.step(in, out); },
          [&](long, double pmf, double tail, const std::vector<double>& w) {
            if (pmf > 0)
              for (std::size_t i = 0; i < w.size(); ++i) acc[i] += pmf * w[i];
            int_m1 += tail * w[im1];
            int_0 += tail * w[i0];
          },
          tol);
      ext.swap(acc);
      op.refresh_ghosts(ext);
      flux += xi_m1 * N * N * (int_m1 - int_0) / op.lambda;
    } else if (dt > 0) {
      // classical RK4 on (rho, Q); step below the stability limit 2.78 / (4 N^2 / eps)
      const double h_max = env.epsilon() / (2 * N * N);
      const long steps = long(std::ceil(dt / h_max));
      const double h = dt / double(steps);
      std::vector<double> k1(ext.size()), k2(ext.size()), k3(ext.size()), k4(ext.size()), tmp(ext.size());
      auto rhs = [&](std::vector<double>& in, std::vector<double>& out) {
        op.generator(in, out);
        out[0] = 0;
        out[std::size_t(S + 1)] = 0;
        return xi_m1 * N * N * (in[im1] - in[i0]);
      };
      for (long s = 0; s < steps; ++s) {
        const double q1 = rhs(ext, k1);
        for (std::size_t i = 0; i < ext.size(); ++i) tmp[i] = ext[i] + 0.5 * h * k1[i];
        const double q2 = rhs(tmp, k2);
        for (std::size_t i = 0; i < ext.size(); ++i) tmp[i] = ext[i] + 0.5 * h * k2[i];
        const double q3 = rhs(tmp, k3);
        for (std::size_t i = 0; i < ext.size(); ++i) tmp[i] = ext[i] + h * k3[i];
        const double q4 = rhs(tmp, k4);
        for (std::size_t i = 0; i < ext.size(); ++i)
          ext[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        flux += h / 6 * (q1 + 2 * q2 + 2 * q3 + q4);
        op.refresh_ghosts(ext);
      }
      traj.terms += steps;
    }
    t_now = t;
    record(t);
  }
  if (traj.max_principle_violation > 1e-9) {
    throw Error("pde", "maximum principle violated by " + std::to_string(traj.max_principle_violation) +
                           "; integrator tolerance not met, retry with a smaller step or tolerance");
  }
  return traj;
}

struct GradientBoundReport {
  double initial_sup = 0;
  double max_sup = 0;
  double observed_ratio = 0;
  double bound_ratio = 0;  // eps^{-2}
  double h_initial = 0, h_max = 0;
  bool pass = false;
};

/// sup_t sup_x |grad_N rho_t| <= eps^{-2} sup_x |grad_N rho_0|.
inline GradientBoundReport gradient_bound_check(const Environment& env, const DiscreteTrajectory& traj,
                                                double tol = 1e-9) {
  require(!traj.gradient_sup.empty(), "pde", "trajectory has no recorded gradients");
  GradientBoundReport r;
  r.initial_sup = traj.gradient0;
  r.h_initial = traj.h0;
  r.max_sup = *std::max_element(traj.gradient_sup.begin(), traj.gradient_sup.end());
  r.h_max = *std::max_element(traj.h_sup.begin(), traj.h_sup.end());
  r.bound_ratio = 1.0 / (env.epsilon() * env.epsilon());
  r.observed_ratio = r.initial_sup > 0 ? r.max_sup / r.initial_sup : 0.0;
  r.pass = r.max_sup <= r.bound_ratio * r.initial_sup + tol && r.h_max <= r.h_initial + tol;
  if (!r.pass)
    throw Error("pde", "gradient bound violated: observed ratio " + std::to_string(r.observed_ratio));
  return r;
}

inline void write_profiles_csv(std::ostream& os, const DiscreteTrajectory& traj) {
  os << "t,x,rho\n";
  for (const auto& p : traj.profiles)
    for (long i = 0; i < p.window.sites(); ++i)
      os << p.t << ',' << p.window.x_min + i << ',' << p.values[std::size_t(i)] << '\n';
}

// ---- continuum -------------------------------------------------------------

struct ContinuumSolution {
  double gamma = 1;
  Shape profile;
  std::vector<double> times, us;
  std::vector<std::vector<double>> rho, drho;  // [time][u]
  double max_error = 0;
  const char* kernel = "gaussian, variance 2t/gamma";
};

inline ContinuumSolution solve_heat(double gamma, const Shape& rho0, const std::vector<double>& times,
                                    const std::vector<double>& us, double tol = 1e-8) {
  rho0.validate_profile();
  require(gamma > 0, "pde", "gamma must be positive");
  ContinuumSolution sol{gamma, rho0, times, us, {}, {}, 0};
  for (double t : times) {
    require(t >= 0, "pde", "negative time");
    std::vector<double> r, d;
    for (double u : us) {
      const auto a = heat_apply(rho0, t, gamma, u);
      const auto b = heat_gradient(rho0, t, gamma, u);
      sol.max_error = std::max({sol.max_error, a.error, b.error});
      r.push_back(a.value);
      d.push_back(b.value);
    }
    sol.rho.push_back(std::move(r));
    sol.drho.push_back(std::move(d));
  }
  if (sol.max_error > tol)
    throw Error("pde", "heat quadrature error " + std::to_string(sol.max_error) + " above tolerance");
  return sol;
}

inline void write_continuum_csv(std::ostream& os, const ContinuumSolution& s) {
  os << "t,u,rho,drho\n";
  for (std::size_t i = 0; i < s.times.size(); ++i)
    for (std::size_t j = 0; j < s.us.size(); ++j)
      os << s.times[i] << ',' << s.us[j] << ',' << s.rho[i][j] << ',' << s.drho[i][j] << '\n';
}

// ---- tagged-particle centering ----------------------------------------------

struct CenteringResult {
  std::vector<double> times;
  std::vector<double> u_ode;   // from u' = -d_u rho / (gamma rho)
  std::vector<double> u_root;  // from int_0^u rho(t,.) = -gamma^{-1} int_0^t d_u rho(s,0) ds
  double max_discrepancy = 0;
};

inline double heat_mass(const Shape& rho0, double gamma, double t, double a, double b) {
  if (a == b) return 0;
  double err = 0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double v) { return heat_apply(rho0, t, gamma, v).value; }, a, b, 10, 1e-13, &err);
}

inline double boundary_flux_integral(const Shape& rho0, double gamma, double t) {
  if (t <= 0) return 0;
  double err = 0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double s) { return heat_gradient(rho0, s, gamma, 0.0).value; }, 0.0, t, 10, 1e-13, &err);
}

inline CenteringResult compute_ut(double gamma, const Shape& rho0, const std::vector<double>& times,
                                  double tol = 1e-6, double vacuum = 1e-6) {
  namespace ode = boost::numeric::odeint;
  rho0.validate_profile();
  CenteringResult res;
  res.times = times;
  using State = std::vector<double>;
  auto rhs = [&](const State& u, State& du, double t) {
    const double r = heat_apply(rho0, t, gamma, u[0]).value;
    if (r < vacuum) throw Error("pde", "density below vacuum threshold along u_t");
    du[0] = -heat_gradient(rho0, t, gamma, u[0]).value / (gamma * r);
  };
  State u{0.0};
  double t_now = 0;
  auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<State>>(1e-12, 1e-12);
  for (double t : times) {
    require(t >= t_now, "pde", "time grid must be increasing");
    if (t > t_now) ode::integrate_adaptive(stepper, rhs, u, t_now, t, std::min(1e-3, t - t_now));
    t_now = t;
    res.u_ode.push_back(u[0]);

    const double target = -boundary_flux_integral(rho0, gamma, t) / gamma;
    double ur = 0;
    if (std::abs(target) > 0) {
      auto F = [&](double x) { return heat_mass(rho0, gamma, t, 0.0, x) - target; };
      double lo = -0.5, hi = 0.5;
      while (F(lo) > 0) lo *= 2;
      while (F(hi) < 0) hi *= 2;
      boost::math::tools::eps_tolerance<double> stop(50);
      std::uintmax_t it = 200;
      const auto br = boost::math::tools::toms748_solve(F, lo, hi, stop, it);
      ur = 0.5 * (br.first + br.second);
    }
    res.u_root.push_back(ur);
    res.max_discrepancy = std::max(res.max_discrepancy, std::abs(ur - u[0]));
  }
  if (res.max_discrepancy > tol)
    throw Error("pde", "ODE and integral forms of u_t disagree by " + std::to_string(res.max_discrepancy));
  return res;
}

/// Integer centering from Q(t) and the starred profile: the unique u with
/// S(u) <= Q < S(u+1), where S(u) = sum_{x=0}^{u} rho (u >= 0), S(-1) = 0 and
/// S(-1-k) = -sum_{x=-k}^{-1} rho; reported as u + 1 so that u_0^N = 0.
inline long compute_utN(const DiscreteProfile& p) {
  const auto& w = p.window;
  const double Q = p.flux;
  if (Q >= 0) {
    double s = 0;  // S(u) for u = -1
    for (long u = -1; u < w.x_max; ++u) {
      const double next = s + p.at(u + 1);
      if (s <= Q && Q < next) return u + 1;
      s = next;
    }
  } else {
    double s = 0;  // S(u+1) for u+1 = -1
    for (long u = -2; u >= w.x_min - 1; --u) {
      const double cur = s - p.at(u + 1);
      if (cur <= Q && Q < s) return u + 1;
      s = cur;
    }
  }
  throw Error("pde", "mean flux outside the window's partial-sum range; enlarge the window");
}

}  // namespace rcsep
