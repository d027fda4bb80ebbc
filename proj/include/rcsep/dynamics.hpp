#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "rcsep/environment.hpp"
#include "rcsep/error.hpp"
#include "rcsep/functions.hpp"
#include "rcsep/rng.hpp"

namespace rcsep {

struct Configuration {
  LatticeWindow window;
  std::vector<std::uint8_t> occupation;  // one entry per window site
  std::optional<long> tagged;            // lattice site of the tagged particle
  double time = 0;
  double reservoir_left = 0, reservoir_right = 0;  // densities at x_min-1 and x_max+1

  bool occupied(long x) const { return occupation[std::size_t(window.index(x))] != 0; }
  long particles() const {
    long n = 0;
    for (auto v : occupation) n += v;
    return n;
  }
};

/// Product Bernoulli(rho0(x/N)) configuration; `star` forces a tagged particle at 0.
inline Configuration init_configuration(const Environment& env, const Shape& rho0, RandomStream& rng,
                                        bool star) {
  rho0.validate_profile();
  const auto& w = env.window();
  Configuration c;
  c.window = w;
  c.occupation.resize(std::size_t(w.sites()));
  for (long i = 0; i < w.sites(); ++i) {
    const double p = rho0.value(double(w.x_min + i) / w.N);
    c.occupation[std::size_t(i)] = (p >= 1.0 || rng.uniform() < p) ? 1 : 0;
  }
  if (star) {
    c.occupation[std::size_t(w.index(0))] = 1;
    c.tagged = 0;
  }
  c.reservoir_left = rho0.value(double(w.x_min - 1) / w.N);
  c.reservoir_right = rho0.value(double(w.x_max + 1) / w.N);
  return c;
}

// ---- observables -----------------------------------------------------------

/// Recorded as scale * (sum_x weights[x] eta(x) - centering[k]) at sample time k.
struct LinearObservable {
  std::string name;
  std::vector<double> weights;
  double scale = 1;
  std::vector<double> centering;
};

/// Time integrals int_0^t sum_x a(x) eta_s(x) ds and
/// int_0^t sum_b c(b) 1{eta_s discrepant across b} ds; c indexed by bond x_min-1..x_max.
struct IntegralObservable {
  std::string name;
  std::vector<double> site_weights;
  std::vector<double> bond_weights;
};

struct ObservableRequest {
  std::vector<LinearObservable> linear;
  std::vector<long> current_bonds;
  bool tagged = false;
  bool snapshots = false;
  bool event_log = false;
  std::vector<IntegralObservable> integrals;
};

struct ObservableSeries {
  LatticeWindow window;
  std::vector<double> sample_times;
  std::vector<std::string> linear_names;
  std::vector<std::vector<double>> linear;  // [observable][time]
  std::vector<long> current_bonds;
  std::vector<std::vector<long>> currents;  // [bond][time]
  std::vector<long> tagged;                 // [time]
  std::vector<std::uint8_t> initial;
  std::vector<std::vector<std::uint8_t>> snapshots;  // [time]
  std::vector<std::string> integral_names;
  std::vector<std::vector<double>> drift_integral, qv_integral;  // [observable][time]
  std::vector<std::uint32_t> events;  // (bond index << 1) | reservoir draw
  long long event_count = 0;
  bool tagged_lost = false;
  std::uint64_t replica_id = 0, master_seed = 0, env_seed = 0;
  std::vector<std::string> warnings;
};

enum class Engine { stirring, rate_tree };

inline Engine engine_from_string(const std::string& s) {
  if (s == "stirring") return Engine::stirring;
  if (s == "rate-tree" || s == "rate_tree") return Engine::rate_tree;
  throw Error("dynamics", "unknown engine '" + s + "'");
}
inline const char* to_string(Engine e) { return e == Engine::stirring ? "stirring" : "rate-tree"; }

// ---- sampling helpers ------------------------------------------------------

/// Vose alias table; a 64-bit draw r picks bin floor(r n / 2^64) and the fractional
/// part of r n decides between the bin and its alias.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(const std::vector<double>& w) {
    const std::size_t n = w.size();
    double total = 0;
    for (double x : w) total += x;
    require(total > 0, "dynamics", "alias table needs positive total weight");
    thr_.assign(n, 0);
    alias_.assign(n, 0);
    std::vector<double> p(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = w[i] * double(n) / total;
      (p[i] < 1 ? small : large).push_back(std::uint32_t(i));
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back(), l = large.back();
      small.pop_back();
      set(s, p[s], l);
      p[l] -= 1 - p[s];
      if (p[l] < 1) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto l : large) set(l, 1.0, l);
    for (auto s : small) set(s, 1.0, s);
  }

  std::size_t size() const { return thr_.size(); }

  std::uint32_t pick(std::uint64_t r) const {
    const unsigned __int128 prod = (unsigned __int128)r * thr_.size();
    const auto bin = std::uint32_t(prod >> 64);
    const std::uint32_t keep = -std::uint32_t(std::uint64_t(prod) >= thr_[bin]);  // branch-free
    return bin ^ ((bin ^ alias_[bin]) & keep);
  }

 private:
  void set(std::uint32_t i, double prob, std::uint32_t alias) {
    thr_[i] = prob >= 1 ? ~std::uint64_t(0) : std::uint64_t(std::ldexp(prob, 64));
    alias_[i] = alias;
  }
  std::vector<std::uint64_t> thr_;
  std::vector<std::uint32_t> alias_;
};

/// Sum tree over bond rates for the exponential-clock engine.
class RateTree {
 public:
  explicit RateTree(std::size_t n) {
    size_ = 1;
    while (size_ < n) size_ <<= 1;
    tree_.assign(2 * size_, 0.0);
  }
  void set(std::size_t i, double v) {
    std::size_t k = i + size_;
    tree_[k] = v;
    for (k >>= 1; k >= 1; k >>= 1) tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
  }
  double total() const { return tree_[1]; }
  std::size_t find(double u) const {  // u in [0, total)
    std::size_t k = 1;
    while (k < size_) {
      if (u < tree_[2 * k]) k = 2 * k;
      else {
        u -= tree_[2 * k];
        k = 2 * k + 1;
      }
    }
    return k - size_;
  }

 private:
  std::size_t size_;
  std::vector<double> tree_;
};

// ---- simulator ---------------------------------------------------------------

/// Shared, read-only simulation context for one environment.
///
/// Internally the occupation lives in a vector of S+2 cells: cell i+1 is site x_min+i,
/// cells 0 and S+1 are reservoir (frozen buffer) or unused (periodic). Bond j joins
/// cells j and j+1 and corresponds to lattice bond x_min-1+j; on a periodic window
/// bond S is the wrap bond (x_max, x_min) and bond 0 is absent.
///
/// Stirring engine: every bond rings at rate N^2 xi and exchanges its two cells (a ring
/// on a bond with equal occupations changes nothing), which has the same law as
/// exchanging discrepant pairs at rate N^2 xi. A ring on a reservoir bond first redraws
/// the reservoir cell. Between sample times only the number of rings matters, so it is
/// drawn as a single Poisson variable.
class Simulator {
 public:
  explicit Simulator(const Environment& env, Engine engine = Engine::stirring)
      : env_(&env), engine_(engine) {
    const auto& w = env.window();
    S_ = w.sites();
    periodic_ = w.boundary == Boundary::periodic;
    N2_ = double(w.N) * w.N;
    weights_.assign(env.values().begin(), env.values().end());
    if (periodic_) weights_[0] = 0;
    total_rate_ = 0;
    for (double x : weights_) total_rate_ += N2_ * x;
    alias_ = AliasTable(weights_);
  }

  const Environment& environment() const { return *env_; }
  double total_ring_rate() const { return total_rate_; }

  ObservableSeries run(const Configuration& config, double horizon, const std::vector<double>& times,
                       const ObservableRequest& req, std::uint64_t master_seed,
                       std::uint64_t replica_id) const {
    RandomStream rng = replica_stream(master_seed, replica_id, 1);
    return run(config, horizon, times, req, rng, master_seed, replica_id);
  }

  ObservableSeries run(const Configuration& config, double horizon, const std::vector<double>& times,
                       const ObservableRequest& req, RandomStream& rng, std::uint64_t master_seed = 0,
                       std::uint64_t replica_id = 0) const {
    validate(config, horizon, times, req);
    State st = make_state(config);
    ObservableSeries out = make_series(config, times, req);
    out.master_seed = master_seed;
    out.replica_id = replica_id;
    std::vector<Integrals> integ = make_integrals(req, st);

    double t = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      advance(st, rng, times[k] - t, req, integ, out);
      t = times[k];
      record(st, k, req, integ, out);
    }
    if (horizon > t) advance(st, rng, horizon - t, req, integ, out);
    out.tagged_lost = st.tag_lost;
    if (st.tag_lost) out.warnings.push_back("tagged particle entered a reservoir");
    return out;
  }

 private:
  struct State {
    std::vector<std::uint8_t> eta;  // S+2 cells
    std::vector<long long> J;       // S+1 bonds
    long tag = -1;                  // cell index or -1
    bool tag_lost = false;
    double rho_l = 0, rho_r = 0;
  };

  struct Integrals {
    const IntegralObservable* obs;
    std::vector<double> a, c;  // padded to cells / bonds
    double A = 0, C = 0;       // current values of the integrands
    double drift = 0, qv = 0;  // accumulated integrals
  };

  void validate(const Configuration& c, double horizon, const std::vector<double>& times,
                const ObservableRequest& req) const {
    require(c.window == env_->window(), "dynamics", "configuration window differs from the environment");
    require(c.occupation.size() == std::size_t(S_), "dynamics", "configuration has wrong size");
    require(horizon >= 0, "dynamics", "negative horizon");
    for (std::size_t k = 0; k < times.size(); ++k)
      require(times[k] >= 0 && times[k] <= horizon && (k == 0 || times[k] > times[k - 1]), "dynamics",
              "sample times must be strictly increasing within [0, T]");
    for (const auto& o : req.linear) {
      require(o.weights.size() == std::size_t(S_), "dynamics", "observable '" + o.name + "' has wrong size");
      require(o.centering.empty() || o.centering.size() == times.size(), "dynamics",
              "observable '" + o.name + "' centering does not match the sample times");
    }
    for (long b : req.current_bonds)
      require(b >= c.window.x_min - 1 && b <= c.window.x_max, "dynamics", "current bond outside the window");
    for (const auto& o : req.integrals)
      require(o.site_weights.size() == std::size_t(S_) && o.bond_weights.size() == std::size_t(S_ + 1),
              "dynamics", "integral observable '" + o.name + "' has wrong size");
    if (req.tagged) require(c.tagged.has_value(), "dynamics", "tagged observable needs a starred configuration");
    if (c.tagged) require(c.occupied(*c.tagged), "dynamics", "tagged site is empty");
  }

  State make_state(const Configuration& c) const {
    State st;
    st.eta.assign(std::size_t(S_ + 2), 0);
    std::copy(c.occupation.begin(), c.occupation.end(), st.eta.begin() + 1);
    st.J.assign(std::size_t(S_ + 1), 0);
    if (c.tagged) st.tag = c.window.index(*c.tagged) + 1;
    st.rho_l = c.reservoir_left;
    st.rho_r = c.reservoir_right;
    return st;
  }

  ObservableSeries make_series(const Configuration& c, const std::vector<double>& times,
                               const ObservableRequest& req) const {
    ObservableSeries s;
    s.window = c.window;
    s.env_seed = env_->seed();
    s.sample_times = times;
    const long buffer = std::max<long>(2, c.window.N / 16);
    for (const auto& o : req.linear) {
      s.linear_names.push_back(o.name);
      s.linear.emplace_back(times.size(), 0.0);
      for (long i = 0; i < S_; ++i)
        if (o.weights[std::size_t(i)] != 0 && (i < buffer || i >= S_ - buffer)) {
          s.warnings.push_back("observable '" + o.name + "' has support in the boundary buffer");
          break;
        }
    }
    s.current_bonds = req.current_bonds;
    s.currents.assign(req.current_bonds.size(), std::vector<long>(times.size(), 0));
    if (req.tagged) s.tagged.assign(times.size(), 0);
    if (req.snapshots) {
      s.initial = c.occupation;
      s.snapshots.resize(times.size());
    }
    for (const auto& o : req.integrals) {
      s.integral_names.push_back(o.name);
      s.drift_integral.emplace_back(times.size(), 0.0);
      s.qv_integral.emplace_back(times.size(), 0.0);
    }
    return s;
  }

  std::vector<Integrals> make_integrals(const ObservableRequest& req, const State& st) const {
    std::vector<Integrals> v;
    for (const auto& o : req.integrals) {
      Integrals in{&o, std::vector<double>(std::size_t(S_ + 2), 0.0), o.bond_weights, 0, 0, 0, 0};
      std::copy(o.site_weights.begin(), o.site_weights.end(), in.a.begin() + 1);
      if (periodic_) in.c[0] = 0;
      for (long i = 1; i <= S_; ++i) in.A += in.a[std::size_t(i)] * st.eta[std::size_t(i)];
      for (long j = 0; j <= S_; ++j) in.C += in.c[std::size_t(j)] * discrepant(st, j);
      v.push_back(std::move(in));
    }
    return v;
  }

  // Discrepancy across bond j; reservoir bonds count the probability of a change.
  double discrepant(const State& st, long j) const {
    if (periodic_) {
      if (j == 0) return 0;
      if (j == S_) return st.eta[std::size_t(S_)] != st.eta[1];
    } else {
      if (j == 0) return st.eta[1] ? 1 - st.rho_l : st.rho_l;
      if (j == S_) return st.eta[std::size_t(S_)] ? 1 - st.rho_r : st.rho_r;
    }
    return st.eta[std::size_t(j)] != st.eta[std::size_t(j + 1)];
  }

  void record(const State& st, std::size_t k, const ObservableRequest& req, const std::vector<Integrals>& integ,
              ObservableSeries& out) const {
    for (std::size_t o = 0; o < req.linear.size(); ++o) {
      const auto& ob = req.linear[o];
      double s = 0;
      const double* w = ob.weights.data();
      const std::uint8_t* e = st.eta.data() + 1;
      for (long i = 0; i < S_; ++i) s += w[i] * e[i];
      if (!ob.centering.empty()) s -= ob.centering[k];
      out.linear[o][k] = ob.scale * s;
    }
    // on a ring bond x_min-1 is the wrap bond x_max
    for (std::size_t b = 0; b < req.current_bonds.size(); ++b) {
      std::size_t j = std::size_t(req.current_bonds[b] - out.window.x_min + 1);
      if (periodic_ && j == 0) j = std::size_t(S_);
      out.currents[b][k] = long(st.J[j]);
    }
    if (req.tagged) out.tagged[k] = st.tag >= 0 ? out.window.x_min + st.tag - 1 : 0;
    if (req.snapshots) out.snapshots[k].assign(st.eta.begin() + 1, st.eta.end() - 1);
    for (std::size_t o = 0; o < integ.size(); ++o) {
      out.drift_integral[o][k] = integ[o].drift;
      out.qv_integral[o][k] = integ[o].qv;
    }
  }

  void advance(State& st, RandomStream& rng, double dt, const ObservableRequest& req, std::vector<Integrals>& integ,
               ObservableSeries& out) const {
    if (dt <= 0) return;
    if (engine_ == Engine::rate_tree) return advance_tree(st, rng, dt, req, integ, out);
    if (!integ.empty()) return advance_timed(st, rng, dt, req, integ, out);
    std::poisson_distribution<long long> pois(total_rate_ * dt);
    const long long n = pois(rng);
    out.event_count += n;
    if (req.event_log || st.tag >= 0) {
      if (req.event_log) out.events.reserve(out.events.size() + std::size_t(n));
      rings<true>(st, rng, n, req.event_log ? &out.events : nullptr);
    } else {
      rings<false>(st, rng, n, nullptr);
    }
  }

  // One exchange on bond j; returns the reservoir draw used (0 if none).
  template <bool Tagged>
  std::uint32_t ring_edge(State& st, RandomStream& rng, std::uint32_t j) const {
    std::uint8_t* e = st.eta.data();
    std::uint32_t fresh = 0;
    std::size_t l = j, r = j + 1;
    if (periodic_) {
      r = 1;  // wrap bond S joins cells S and 1
    } else {
      const bool left = j == 0;
      fresh = rng.uniform() < (left ? st.rho_l : st.rho_r);
      e[left ? 0 : S_ + 1] = std::uint8_t(fresh);
    }
    const std::uint8_t a = e[l], c = e[r];
    e[l] = c;
    e[r] = a;
    st.J[j] += int(a) - int(c);
    if (Tagged && st.tag >= 0) {
      if (st.tag == long(l) && !c) st.tag = long(r);
      else if (st.tag == long(r) && !a) st.tag = long(l);
      if (!periodic_ && (st.tag == 0 || st.tag == S_ + 1)) {
        st.tag = -1;
        st.tag_lost = true;
      }
    }
    return fresh;
  }

  template <bool Tagged>
  void rings(State& st, RandomStream& rng, long long n, std::vector<std::uint32_t>* log) const {
    constexpr int B = 256;
    std::uint32_t bonds[B];
    std::uint8_t* e = st.eta.data();
    long long* J = st.J.data();
    const std::uint32_t last = std::uint32_t(S_);
    while (n > 0) {
      const int m = int(std::min<long long>(n, B));
      RandomStream local = rng;
      for (int i = 0; i < m; ++i) bonds[i] = alias_.pick(local());
      rng = local;
      for (int i = 0; i < m; ++i) {
        const std::uint32_t j = bonds[i];
        if (j == 0 || j == last) {
          const std::uint32_t fresh = ring_edge<Tagged>(st, rng, j);
          if (log) log->push_back(j << 1 | fresh);
          continue;
        }
        const std::uint8_t a = e[j], c = e[j + 1];
        e[j] = c;
        e[j + 1] = a;
        J[j] += int(a) - int(c);
        if constexpr (Tagged) {
          const long tg = st.tag;
          st.tag += long(tg == long(j) && !c) - long(tg == long(j) + 1 && !a);
          if (log) log->push_back(j << 1);
        }
      }
      n -= m;
    }
  }

  // Event-by-event stirring with exponential waiting times, for time integrals.
  void advance_timed(State& st, RandomStream& rng, double dt, const ObservableRequest& req,
                     std::vector<Integrals>& integ, ObservableSeries& out) const {
    double t = 0;
    for (;;) {
      const double w = rng.exponential() / total_rate_;
      const double step = std::min(w, dt - t);
      for (auto& in : integ) {
        in.drift += in.A * step;
        in.qv += in.C * step;
      }
      if (t + w >= dt) break;
      t += w;
      const std::uint32_t j = alias_.pick(rng());
      change(st, rng, j, integ, req.event_log ? &out.events : nullptr);
      ++out.event_count;
    }
  }

  // Applies one ring on bond j with incremental integrand updates.
  void change(State& st, RandomStream& rng, std::uint32_t j, std::vector<Integrals>& integ,
              std::vector<std::uint32_t>* log) const {
    const std::size_t l = j, r = (periodic_ && j == S_) ? 1 : j + 1;
    // bonds whose discrepancy can change: those touching cell l or cell r
    long bl[4];
    int nb = 0;
    for (long b : {long(l) - 1, long(l), long(r) - 1, long(r)}) {
      if (periodic_ && b == 0) b = S_;
      if (b < 0 || b > S_ || std::find(bl, bl + nb, b) != bl + nb) continue;
      bl[nb++] = b;
    }
    auto touched = [&](auto&& f) {
      for (int q = 0; q < nb; ++q) f(bl[q]);
    };
    for (auto& in : integ) {
      touched([&](long b) { in.C -= in.c[std::size_t(b)] * discrepant(st, b); });
      in.A -= in.a[l] * st.eta[l] + in.a[r] * st.eta[r];
    }
    std::uint32_t fresh = 0;
    if (j == 0 || j == S_) {
      fresh = ring_edge<true>(st, rng, j);
    } else {
      const std::uint8_t a = st.eta[j], c = st.eta[j + 1];
      st.eta[j] = c;
      st.eta[j + 1] = a;
      st.J[j] += int(a) - int(c);
      if (st.tag == long(j) && !c) st.tag = long(j) + 1;
      else if (st.tag == long(j) + 1 && !a) st.tag = long(j);
    }
    for (auto& in : integ) {
      touched([&](long b) { in.C += in.c[std::size_t(b)] * discrepant(st, b); });
      in.A += in.a[l] * st.eta[l] + in.a[r] * st.eta[r];
    }
    if (log) log->push_back(j << 1 | fresh);
  }

  // Exponential clocks on discrepant bonds only, selected through a sum tree.
  void advance_tree(State& st, RandomStream& rng, double dt, const ObservableRequest& req,
                    std::vector<Integrals>& integ, ObservableSeries& out) const {
    RateTree tree(std::size_t(S_ + 1));
    auto rate = [&](long b) { return N2_ * weights_[std::size_t(b)] * discrepant(st, b); };
    for (long b = 0; b <= S_; ++b) tree.set(std::size_t(b), rate(b));
    double t = 0;
    for (;;) {
      const double R = tree.total();
      const double w = R > 0 ? rng.exponential() / R : dt;
      const double step = std::min(w, dt - t);
      for (auto& in : integ) {
        in.drift += in.A * step;
        in.qv += in.C * step;
      }
      if (t + w >= dt) break;
      t += w;
      const auto j = std::uint32_t(std::min(tree.find(rng.uniform() * R), std::size_t(S_)));
      if (j == 0 || j == S_) {
        if (!periodic_) {
          // reservoir bond fired with a change: flip the edge cell
          const std::size_t cell = j == 0 ? 1 : S_;
          const std::uint8_t before = st.eta[cell];
          for (auto& in : integ) {
            for (long b : {long(cell) - 1, long(cell)}) in.C -= in.c[std::size_t(b)] * discrepant(st, b);
            in.A -= in.a[cell] * before;
          }
          st.eta[cell] = std::uint8_t(1 - before);
          st.J[j] += j == 0 ? (before ? -1 : 1) : (before ? 1 : -1);
          if (st.tag == long(cell) && before) {
            st.tag = -1;
            st.tag_lost = true;
          }
          for (auto& in : integ) {
            for (long b : {long(cell) - 1, long(cell)}) in.C += in.c[std::size_t(b)] * discrepant(st, b);
            in.A += in.a[cell] * st.eta[cell];
          }
          if (req.event_log) out.events.push_back(j << 1 | std::uint32_t(st.eta[cell]));
        } else {
          change(st, rng, j, integ, req.event_log ? &out.events : nullptr);
        }
      } else {
        change(st, rng, j, integ, req.event_log ? &out.events : nullptr);
      }
      ++out.event_count;
      const long lo = long(j) - 1, hi = long(j) + 1;
      for (long b = lo; b <= hi; ++b)
        if (b >= 0 && b <= S_) tree.set(std::size_t(b), rate(b));
      if (periodic_) {
        tree.set(std::size_t(S_), rate(S_));
        tree.set(1, rate(1));
        tree.set(std::size_t(S_ - 1), rate(S_ - 1));
      }
    }
  }

  const Environment* env_;
  Engine engine_;
  long S_ = 0;
  bool periodic_ = false;
  double N2_ = 1;
  double total_rate_ = 0;
  std::vector<double> weights_;
  AliasTable alias_;
};

/// One replica: configuration drawn from rho0 and dynamics from the replica's stream.
inline ObservableSeries simulate(const Simulator& sim, const Configuration& config, double horizon,
                                 const std::vector<double>& times, const ObservableRequest& req,
                                 std::uint64_t master_seed, std::uint64_t replica_id) {
  return sim.run(config, horizon, times, req, master_seed, replica_id);
}

/// Runs f(replica_id) for every replica on `threads` workers. Each replica owns its
/// stream, so outputs do not depend on the thread count.
template <class F>
void for_each_replica(long replicas, int threads, F&& f) {
  if (threads <= 0) threads = int(std::max(1u, std::thread::hardware_concurrency()));
  threads = int(std::min<long>(threads, std::max<long>(1, replicas)));
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const long r = next.fetch_add(1);
      if (r >= replicas || failed.load()) return;
      try {
        f(r);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// ---- consistency checks --------------------------------------------------

struct CheckReport {
  long checked = 0;
  long violations = 0;
  std::string first_violation;
  bool pass() const { return violations == 0; }
};

/// J_{x-1,x}(t) - J_{x,x+1}(t) = eta_t(x) - eta_0(x) wherever both bonds are recorded.
inline CheckReport current_conservation_check(const ObservableSeries& s, const LatticeWindow& w) {
  require(!s.initial.empty() && s.snapshots.size() == s.sample_times.size(), "dynamics",
          "conservation check needs occupation snapshots");
  require(s.window == w, "dynamics", "series recorded on a different window");
  CheckReport rep;
  for (std::size_t a = 0; a < s.current_bonds.size(); ++a)
    for (std::size_t b = 0; b < s.current_bonds.size(); ++b) {
      if (s.current_bonds[b] != s.current_bonds[a] + 1) continue;
      const long x = s.current_bonds[b];
      if (!w.contains(x)) continue;
      const auto i = std::size_t(w.index(x));
      for (std::size_t k = 0; k < s.sample_times.size(); ++k) {
        ++rep.checked;
        const long lhs = s.currents[a][k] - s.currents[b][k];
        const long rhs = long(s.snapshots[k][i]) - long(s.initial[i]);
        if (lhs != rhs) {
          if (rep.violations++ == 0)
            rep.first_violation = "site " + std::to_string(x) + ", time " + std::to_string(s.sample_times[k]) +
                                  ", replica " + std::to_string(s.replica_id);
        }
      }
    }
  if (!rep.pass())
    throw Error("dynamics", "current conservation violated at " + rep.first_violation);
  return rep;
}

/// With X the tagged position (started at 0) and J = J_{-1,0}:
///   X >= n  <=>  J >= sum_{x=0}^{n-1} eta(x)            for n >= 0,
///   X <= -n <=>  -J > sum_{x=-n+1}^{-1} eta(x)          for n >= 1.
inline CheckReport tagged_vs_current_check(const ObservableSeries& s) {
  require(!s.tagged.empty(), "dynamics", "tagged check needs the tagged position");
  require(s.snapshots.size() == s.sample_times.size(), "dynamics", "tagged check needs occupation snapshots");
  const auto it = std::find(s.current_bonds.begin(), s.current_bonds.end(), -1L);
  require(it != s.current_bonds.end(), "dynamics", "tagged check needs J_{-1,0}");
  const auto& J = s.currents[std::size_t(it - s.current_bonds.begin())];
  const auto& w = s.window;
  CheckReport rep;
  auto fail = [&](std::size_t k, long n) {
    if (rep.violations++ == 0)
      rep.first_violation = "n = " + std::to_string(n) + ", time " + std::to_string(s.sample_times[k]) +
                            ", replica " + std::to_string(s.replica_id);
  };
  for (std::size_t k = 0; k < s.sample_times.size(); ++k) {
    if (s.tagged_lost) break;
    const long X = s.tagged[k];
    const auto& eta = s.snapshots[k];
    long partial = 0;
    for (long n = 0; n <= w.x_max; ++n) {
      ++rep.checked;
      if ((X >= n) != (J[k] >= partial)) fail(k, n);
      partial += eta[std::size_t(w.index(n))];
    }
    partial = 0;  // sum_{x=-n+1}^{-1}
    for (long n = 1; n <= -w.x_min; ++n) {
      ++rep.checked;
      if ((X <= -n) != (-J[k] > partial)) fail(k, -n);
      partial += eta[std::size_t(w.index(-n))];
    }
  }
  if (!rep.pass()) throw Error("dynamics", "tagged/current relation violated at " + rep.first_violation);
  return rep;
}

/// Replays an event log from the initial occupation (needs event_log and snapshots).
inline std::vector<std::uint8_t> replay_events(const ObservableSeries& s, std::size_t n_events) {
  const long S = s.window.sites();
  const bool periodic = s.window.boundary == Boundary::periodic;
  std::vector<std::uint8_t> e(std::size_t(S + 2), 0);
  std::copy(s.initial.begin(), s.initial.end(), e.begin() + 1);
  for (std::size_t k = 0; k < n_events && k < s.events.size(); ++k) {
    const std::uint32_t j = s.events[k] >> 1, fresh = s.events[k] & 1;
    std::size_t l = j, r = j + 1;
    if (periodic && j == std::uint32_t(S)) r = 1;
    if (!periodic && j == 0) e[0] = std::uint8_t(fresh);
    if (!periodic && j == std::uint32_t(S)) e[std::size_t(S + 1)] = std::uint8_t(fresh);
    std::swap(e[l], e[r]);
  }
  return {e.begin() + 1, e.end() - 1};
}

// ---- serialization -------------------------------------------------------

inline void write_series_csv_header(std::ostream& os, const ObservableSeries& s) {
  os << "replica,t";
  for (const auto& n : s.linear_names) os << ',' << n;
  for (long b : s.current_bonds) os << ",J_" << b;
  if (!s.tagged.empty()) os << ",X";
  for (const auto& n : s.integral_names) os << ',' << n << "_drift," << n << "_qv";
  os << '\n';
}

inline void write_series_csv_rows(std::ostream& os, const ObservableSeries& s) {
  for (std::size_t k = 0; k < s.sample_times.size(); ++k) {
    os << s.replica_id << ',' << s.sample_times[k];
    for (const auto& v : s.linear) os << ',' << v[k];
    for (const auto& v : s.currents) os << ',' << v[k];
    if (!s.tagged.empty()) os << ',' << s.tagged[k];
    for (std::size_t o = 0; o < s.integral_names.size(); ++o)
      os << ',' << s.drift_integral[o][k] << ',' << s.qv_integral[o][k];
    os << '\n';
  }
}

/// Compact little-endian binary log: magic, counts, then per time the doubles and longs.
inline void write_series_binary(std::ostream& os, const std::vector<ObservableSeries>& batch) {
  auto put = [&](auto v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  os.write("RCSEPLOG", 8);
  put(std::uint64_t(batch.size()));
  for (const auto& s : batch) {
    put(s.replica_id);
    put(s.master_seed);
    put(s.env_seed);
    put(std::uint64_t(s.sample_times.size()));
    put(std::uint64_t(s.linear.size()));
    put(std::uint64_t(s.currents.size()));
    put(std::uint64_t(s.tagged.empty() ? 0 : 1));
    for (std::size_t k = 0; k < s.sample_times.size(); ++k) {
      put(s.sample_times[k]);
      for (const auto& v : s.linear) put(v[k]);
      for (const auto& v : s.currents) put(std::int64_t(v[k]));
      if (!s.tagged.empty()) put(std::int64_t(s.tagged[k]));
    }
  }
}

}  // namespace rcsep
