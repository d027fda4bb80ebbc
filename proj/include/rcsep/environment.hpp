#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "rcsep/error.hpp"
#include "rcsep/rng.hpp"

namespace rcsep {

/// Distribution of a single conductance.
struct DisorderLaw {
  enum class Kind { constant, uniform, two_point, explicit_values };
  Kind kind = Kind::constant;
  double a = 1.0;  // constant value, or lower end / first atom
  double b = 1.0;  // upper end / second atom
  double p = 1.0;  // weight of the first atom

  static DisorderLaw constant(double c) { return {Kind::constant, c, c, 1.0}; }
  static DisorderLaw uniform(double lo, double hi) { return {Kind::uniform, lo, hi, 1.0}; }
  static DisorderLaw two_point(double lo, double hi, double p) { return {Kind::two_point, lo, hi, p}; }

  double lower() const {
    if (kind == Kind::two_point) return std::min(a, b);
    return a;
  }
  double upper() const {
    if (kind == Kind::two_point) return std::max(a, b);
    return kind == Kind::constant ? a : b;
  }

  // Quantile map from a uniform draw.
  double sample(double u) const {
    switch (kind) {
      case Kind::constant: return a;
      case Kind::uniform: return a + (b - a) * u;
      case Kind::two_point: return u < p ? a : b;
      case Kind::explicit_values: break;
    }
    throw Error("environment", "explicit law cannot be sampled");
  }

  double mean() const {
    switch (kind) {
      case Kind::constant: return a;
      case Kind::uniform: return 0.5 * (a + b);
      case Kind::two_point: return p * a + (1 - p) * b;
      case Kind::explicit_values: break;
    }
    throw Error("environment", "explicit law has no mean");
  }

  /// gamma = E[1/xi].
  double mean_inverse() const {
    switch (kind) {
      case Kind::constant: return 1.0 / a;
      case Kind::uniform: return a == b ? 1.0 / a : std::log(b / a) / (b - a);
      case Kind::two_point: return p / a + (1 - p) / b;
      case Kind::explicit_values: break;
    }
    throw Error("environment", "explicit law has no mean inverse");
  }

  std::string describe() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::constant: os << "constant(" << a << ")"; break;
      case Kind::uniform: os << "uniform[" << a << "," << b << "]"; break;
      case Kind::two_point: os << "two-point{" << a << "," << b << "; p=" << p << "}"; break;
      case Kind::explicit_values: os << "explicit"; break;
    }
    return os.str();
  }
};

enum class Boundary { periodic, frozen_buffer };

inline const char* to_string(Boundary b) {
  return b == Boundary::periodic ? "periodic" : "frozen-buffer";
}

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "frozen-buffer" || s == "frozen_buffer") return Boundary::frozen_buffer;
  throw Error("environment", "unknown boundary mode '" + s + "'");
}

/// Sites x_min..x_max. With a frozen buffer, sites x_min-1 and x_max+1 are
/// reservoirs and bonds x_min-1 and x_max connect them to the window.
struct LatticeWindow {
  int N = 16;
  long x_min = -16;
  long x_max = 16;
  Boundary boundary = Boundary::frozen_buffer;

  long sites() const { return x_max - x_min + 1; }
  long index(long x) const { return x - x_min; }
  bool contains(long x) const { return x >= x_min && x <= x_max; }

  void validate() const {
    require(N >= 1, "environment", "N must be positive");
    require(x_min < 0 && 0 < x_max, "environment", "window must satisfy x_min < 0 < x_max");
    require(sites() >= 2L * N, "environment",
            "window of " + std::to_string(sites()) + " sites is shorter than 2N = " +
                std::to_string(2L * N));
  }

  /// [-ceil(A N), ceil(A N)].
  static LatticeWindow centered(int N, double half_width, Boundary b) {
    const long h = std::max<long>(long(std::ceil(half_width * N)), N);
    LatticeWindow w{N, -h, h, b};
    w.validate();
    return w;
  }

  bool operator==(const LatticeWindow&) const = default;
};

class Environment {
 public:
  Environment() = default;

  static Environment generate(std::uint64_t seed, const DisorderLaw& law,
                              const LatticeWindow& window, double epsilon = 0.25) {
    window.validate();
    check_law(law, epsilon);
    Environment env;
    env.seed_ = seed;
    env.law_ = law;
    env.epsilon_ = epsilon;
    env.window_ = window;
    env.values_.resize(std::size_t(window.sites() + 1));
    for (long x = window.x_min - 1; x <= window.x_max; ++x)
      env.values_[std::size_t(x - window.x_min + 1)] = law.sample(bond_uniform(seed, x));
    env.finish();
    return env;
  }

  /// Conductances given bond by bond, for bonds x_min-1..x_max.
  static Environment from_values(const LatticeWindow& window, std::vector<double> values,
                                 double epsilon = 0.25, std::uint64_t seed = 0) {
    window.validate();
    require(values.size() == std::size_t(window.sites() + 1), "environment",
            "expected one conductance per bond x_min-1..x_max");
    Environment env;
    env.seed_ = seed;
    env.law_ = DisorderLaw{DisorderLaw::Kind::explicit_values, 0, 0, 0};
    env.epsilon_ = epsilon;
    env.window_ = window;
    env.values_ = std::move(values);
    env.finish();
    return env;
  }

  /// Same seed and law on a larger window; shared bonds are bit-identical.
  Environment extended(const LatticeWindow& bigger) const {
    require(law_.kind != DisorderLaw::Kind::explicit_values, "environment",
            "explicit environments cannot be extended");
    return generate(seed_, law_, bigger, epsilon_);
  }

  static void check_law(const DisorderLaw& law, double epsilon) {
    require(epsilon > 0 && epsilon < 1, "environment", "epsilon must lie in (0,1)");
    if (law.kind == DisorderLaw::Kind::explicit_values) return;
    if (law.kind == DisorderLaw::Kind::uniform)
      require(law.a <= law.b, "environment", "uniform law needs a <= b");
    if (law.kind == DisorderLaw::Kind::two_point)
      require(law.p >= 0 && law.p <= 1, "environment", "two-point weight p must lie in [0,1]");
    if (law.lower() < epsilon) {
      std::ostringstream os;
      os << "law " << law.describe() << " has lower support bound " << law.lower()
         << " below epsilon = " << epsilon;
      throw Error("environment", os.str());
    }
    if (law.upper() > 1.0 / epsilon) {
      std::ostringstream os;
      os << "law " << law.describe() << " has upper support bound " << law.upper()
         << " above 1/epsilon = " << 1.0 / epsilon;
      throw Error("environment", os.str());
    }
  }

  double xi(long bond) const {
    if (bond < window_.x_min - 1 || bond > window_.x_max)
      throw Error("environment", "bond " + std::to_string(bond) + " outside the window");
    return values_[std::size_t(bond - window_.x_min + 1)];
  }

  std::uint64_t seed() const { return seed_; }
  const DisorderLaw& law() const { return law_; }
  double epsilon() const { return epsilon_; }
  const LatticeWindow& window() const { return window_; }
  int N() const { return window_.N; }
  /// Conductances of bonds x_min-1..x_max, in that order.
  const std::vector<double>& values() const { return values_; }
  double gamma_hat() const { return gamma_hat_; }

  /// The law's gamma when known, else the window average.
  double gamma_law() const {
    return law_.kind == DisorderLaw::Kind::explicit_values ? gamma_hat_ : law_.mean_inverse();
  }

  double max_xi() const { return *std::max_element(values_.begin(), values_.end()); }

 private:
  void finish() {
    double s = 0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double v = values_[i];
      if (!(v >= epsilon_ * (1 - 1e-12) && v <= (1 + 1e-12) / epsilon_)) {
        std::ostringstream os;
        os << "conductance " << v << " on bond " << window_.x_min - 1 + long(i)
           << " violates ellipticity epsilon = " << epsilon_;
        throw Error("environment", os.str());
      }
      s += 1.0 / v;
    }
    gamma_hat_ = s / double(values_.size());
  }

  std::uint64_t seed_ = 0;
  DisorderLaw law_;
  double epsilon_ = 0.25;
  LatticeWindow window_;
  std::vector<double> values_;
  double gamma_hat_ = 0;
};

struct BlockAverage {
  long K;
  double right;  // (1/K) sum_{x=1..K} 1/xi_x
  double left;   // (1/K) sum_{x=-K..-1} 1/xi_x
};

inline std::vector<BlockAverage> gamma_convergence_report(const Environment& env,
                                                          const std::vector<long>& block_sizes) {
  const auto& w = env.window();
  std::vector<BlockAverage> out;
  for (long K : block_sizes) {
    require(K > 0, "environment", "block size must be positive");
    require(K <= w.x_max && -K >= w.x_min - 1, "environment",
            "block size " + std::to_string(K) + " exceeds the window");
    double r = 0, l = 0;
    for (long x = 1; x <= K; ++x) r += 1.0 / env.xi(x);
    for (long x = -K; x <= -1; ++x) l += 1.0 / env.xi(x);
    out.push_back({K, r / double(K), l / double(K)});
  }
  return out;
}

// ---- JSON ----------------------------------------------------------------

inline void to_json(nlohmann::json& j, const DisorderLaw& l) {
  switch (l.kind) {
    case DisorderLaw::Kind::constant: j = {{"kind", "constant"}, {"c", l.a}}; break;
    case DisorderLaw::Kind::uniform: j = {{"kind", "uniform"}, {"a", l.a}, {"b", l.b}}; break;
    case DisorderLaw::Kind::two_point:
      j = {{"kind", "two-point"}, {"a", l.a}, {"b", l.b}, {"p", l.p}};
      break;
    case DisorderLaw::Kind::explicit_values: j = {{"kind", "explicit"}}; break;
  }
}

inline void from_json(const nlohmann::json& j, DisorderLaw& l) {
  const std::string k = j.at("kind");
  if (k == "constant") l = DisorderLaw::constant(j.at("c"));
  else if (k == "uniform") l = DisorderLaw::uniform(j.at("a"), j.at("b"));
  else if (k == "two-point") l = DisorderLaw::two_point(j.at("a"), j.at("b"), j.at("p"));
  else if (k == "explicit") l = DisorderLaw{DisorderLaw::Kind::explicit_values, 0, 0, 0};
  else throw Error("environment", "unknown law kind '" + k + "'");
}

inline void to_json(nlohmann::json& j, const LatticeWindow& w) {
  j = {{"N", w.N}, {"x_min", w.x_min}, {"x_max", w.x_max}, {"boundary", to_string(w.boundary)}};
}

inline void from_json(const nlohmann::json& j, LatticeWindow& w) {
  w.N = j.at("N");
  w.x_min = j.at("x_min");
  w.x_max = j.at("x_max");
  w.boundary = boundary_from_string(j.value("boundary", std::string("frozen-buffer")));
  w.validate();
}

inline nlohmann::json environment_to_json(const Environment& env, bool with_values) {
  nlohmann::json j = {{"seed", env.seed()},
                      {"law", env.law()},
                      {"epsilon", env.epsilon()},
                      {"window", env.window()},
                      {"gamma_hat", env.gamma_hat()}};
  if (with_values || env.law().kind == DisorderLaw::Kind::explicit_values) j["values"] = env.values();
  return j;
}

/// Loads an environment document; stored values are checked against epsilon.
inline Environment environment_from_json(const nlohmann::json& j) {
  const LatticeWindow w = j.at("window").get<LatticeWindow>();
  const double eps = j.value("epsilon", 0.25);
  const std::uint64_t seed = j.value("seed", std::uint64_t(0));
  if (j.contains("values")) {
    Environment env = Environment::from_values(w, j.at("values").get<std::vector<double>>(), eps, seed);
    const DisorderLaw law = j.at("law").get<DisorderLaw>();
    if (law.kind != DisorderLaw::Kind::explicit_values) {
      const Environment regen = Environment::generate(seed, law, w, eps);
      require(regen.values() == env.values(), "environment",
              "stored values disagree with regeneration from (seed, law, window)");
      return regen;
    }
    return env;
  }
  return Environment::generate(seed, j.at("law").get<DisorderLaw>(), w, eps);
}

}  // namespace rcsep
