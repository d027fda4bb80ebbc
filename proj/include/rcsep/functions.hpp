#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <nlohmann/json.hpp>
#include "rcsep/error.hpp"

namespace rcsep {

inline double normal_pdf(double z) { return 0.3989422804014327 * std::exp(-0.5 * z * z); }
// Phi(z) through erfc, accurate in both tails.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// One-dimensional shapes used both as initial profiles and as test functions.
///   constant   base
///   tanh       base + amp (1 + tanh(-(u - center)/width)) / 2
///   gaussian   base + amp exp(-(u - center)^2 / (2 width^2))
///   bump       base + amp (1 - z^2)^3 on |z| < 1, z = (u - center)/width   (compact, C^2)
///   indicator  amp on [center, center + width)
///   ramp       amp clamp((u - center)/width, 0, 1)
///   tent       amp (1 - (u - center)/width) on [center, center + width)
struct Shape {
  enum class Kind { constant, tanh, gaussian, bump, indicator, ramp, tent };
  Kind kind = Kind::constant;
  double base = 0, amp = 1, center = 0, width = 1;

  static Shape constant(double a) { return {Kind::constant, a, 0, 0, 1}; }
  static Shape tanh_front(double lo, double hi, double center = 0, double width = 1) {
    return {Kind::tanh, lo, hi - lo, center, width};
  }
  static Shape gaussian(double amp, double center, double width, double base = 0) {
    return {Kind::gaussian, base, amp, center, width};
  }
  static Shape bump(double amp, double center, double radius) {
    return {Kind::bump, 0, amp, center, radius};
  }
  static Shape indicator(double a, double b) { return {Kind::indicator, 0, 1, a, b - a}; }
  static Shape ramp(double l) { return {Kind::ramp, 0, 1, 0, l}; }
  static Shape tent(double n) { return {Kind::tent, 0, 1, 0, n}; }

  double operator()(double u) const { return value(u); }

  double value(double u) const {
    const double z = (u - center) / width;
    switch (kind) {
      case Kind::constant: return base;
      case Kind::tanh: return base + amp * 0.5 * (1 + std::tanh(-z));
      case Kind::gaussian: return base + amp * std::exp(-0.5 * z * z);
      case Kind::bump: {
        if (std::abs(z) >= 1) return base;
        const double q = 1 - z * z;
        return base + amp * q * q * q;
      }
      case Kind::indicator: return (z >= 0 && z < 1) ? amp : 0.0;
      case Kind::ramp: return amp * std::clamp(z, 0.0, 1.0);
      case Kind::tent: return (z >= 0 && z < 1) ? amp * (1 - z) : 0.0;
    }
    return 0;
  }

  double derivative(double u) const {
    const double z = (u - center) / width;
    switch (kind) {
      case Kind::constant: return 0;
      case Kind::tanh: {
        const double c = std::cosh(z);
        return -amp * 0.5 / (c * c * width);
      }
      case Kind::gaussian: return -amp * z * std::exp(-0.5 * z * z) / width;
      case Kind::bump: {
        if (std::abs(z) >= 1) return 0;
        const double q = 1 - z * z;
        return -6 * amp * z * q * q / width;
      }
      case Kind::indicator: return 0;
      case Kind::ramp: return (z > 0 && z < 1) ? amp / width : 0.0;
      case Kind::tent: return (z >= 0 && z < 1) ? -amp / width : 0.0;
    }
    return 0;
  }

  bool compact() const {
    return kind == Kind::bump || kind == Kind::indicator || kind == Kind::tent;
  }

  const char* smoothness_class() const {
    switch (kind) {
      case Kind::bump: return "compact-C2";
      case Kind::gaussian: return "Schwartz-sampled";
      case Kind::indicator: return "indicator";
      case Kind::ramp:
      case Kind::tent: return "ramp";
      default: return "profile";
    }
  }

  /// Interval outside which the shape minus its base vanishes; Schwartz shapes are
  /// cut where both |G| and |G'| drop below `cut`.
  std::pair<double, double> support(double cut = 1e-12) const {
    switch (kind) {
      case Kind::bump: return {center - width, center + width};
      case Kind::indicator:
      case Kind::tent: return {center, center + width};
      case Kind::gaussian: {
        double z = 1;
        const double a = std::abs(amp);
        while (a * std::exp(-0.5 * z * z) * std::max(1.0, z / width) >= cut) z += 0.01;
        return {center - z * width, center + z * width};
      }
      default:
        return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    }
  }

  double min_value() const {
    switch (kind) {
      case Kind::constant: return base;
      case Kind::tanh:
      case Kind::gaussian:
      case Kind::bump: return std::min(base, base + amp);
      default: return std::min(0.0, amp);
    }
  }
  double max_value() const {
    switch (kind) {
      case Kind::constant: return base;
      case Kind::tanh:
      case Kind::gaussian:
      case Kind::bump: return std::max(base, base + amp);
      default: return std::max(0.0, amp);
    }
  }

  /// Profiles must map into [0,1].
  void validate_profile() const {
    if (min_value() < 0 || max_value() > 1) {
      std::ostringstream os;
      os << "profile " << describe() << " takes values in [" << min_value() << ", " << max_value()
         << "], outside [0,1]";
      throw Error("dynamics", os.str());
    }
  }

  std::string describe() const {
    std::ostringstream os;
    os << to_string(kind) << "(base=" << base << ", amp=" << amp << ", center=" << center
       << ", width=" << width << ")";
    return os.str();
  }

  static const char* to_string(Kind k) {
    switch (k) {
      case Kind::constant: return "constant";
      case Kind::tanh: return "tanh";
      case Kind::gaussian: return "gaussian";
      case Kind::bump: return "bump";
      case Kind::indicator: return "indicator";
      case Kind::ramp: return "ramp";
      case Kind::tent: return "tent";
    }
    return "?";
  }

  static Kind kind_from_string(const std::string& s) {
    for (Kind k : {Kind::constant, Kind::tanh, Kind::gaussian, Kind::bump, Kind::indicator,
                   Kind::ramp, Kind::tent})
      if (s == to_string(k)) return k;
    throw Error("cli", "unknown shape kind '" + s + "'");
  }
};

inline void to_json(nlohmann::json& j, const Shape& s) {
  j = {{"kind", Shape::to_string(s.kind)},
       {"base", s.base},
       {"amp", s.amp},
       {"center", s.center},
       {"width", s.width}};
}

inline void from_json(const nlohmann::json& j, Shape& s) {
  s.kind = Shape::kind_from_string(j.at("kind"));
  s.base = j.value("base", 0.0);
  s.amp = j.value("amp", 1.0);
  s.center = j.value("center", 0.0);
  s.width = j.value("width", 1.0);
  if (s.kind == Shape::Kind::constant && j.contains("value")) s.base = j.at("value");
  if (s.kind == Shape::Kind::tanh && j.contains("low") && j.contains("high")) {
    s.base = j.at("low");
    s.amp = double(j.at("high")) - s.base;
  }
}

// ---- heat semigroup ------------------------------------------------------
// T_r f(u) = E f(u + sigma Z) with sigma^2 = 2 r / gamma, the kernel of
// d/dt = gamma^{-1} d^2/du^2.

struct SemigroupValue {
  double value = 0;
  double error = 0;
};

namespace detail {
// E[(X - a)^+] for X ~ N(m, s^2)
inline double call_payoff(double m, double s, double a) {
  const double d = (m - a) / s;
  return (m - a) * normal_cdf(d) + s * normal_pdf(d);
}

template <class F>
SemigroupValue gaussian_average(F&& f, double u, double sigma, double lo_z = -10.0,
                                double hi_z = 10.0) {
  double err = 0;
  auto g = [&](double z) { return normal_pdf(z) * f(u + sigma * z); };
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      g, lo_z, hi_z, 12, 1e-13, &err);
  return {v, std::abs(err)};
}

// Splits the Gaussian average at the shape's kinks so the integrand is smooth.
template <class F>
SemigroupValue split_gaussian_average(F&& f, double u, double sigma, double k1, double k2) {
  double points[4] = {-10, (k1 - u) / sigma, (k2 - u) / sigma, 10};
  std::sort(points + 1, points + 3);
  SemigroupValue total;
  for (int i = 0; i < 3; ++i) {
    const double a = std::clamp(points[i], -10.0, 10.0), b = std::clamp(points[i + 1], -10.0, 10.0);
    if (b <= a) continue;
    const auto part = gaussian_average(f, u, sigma, a, b);
    total.value += part.value;
    total.error += part.error;
  }
  return total;
}
}  // namespace detail

inline SemigroupValue heat_apply(const Shape& f, double r, double gamma, double u) {
  if (r <= 0) return {f.value(u), 0};
  const double s = std::sqrt(2 * r / gamma);
  const double z = (u - f.center);
  switch (f.kind) {
    case Shape::Kind::constant: return {f.base, 0};
    case Shape::Kind::gaussian: {
      const double w2 = f.width * f.width + s * s;
      return {f.base + f.amp * f.width / std::sqrt(w2) * std::exp(-0.5 * z * z / w2), 0};
    }
    case Shape::Kind::indicator:
      return {f.amp * (normal_cdf((f.center + f.width - u) / s) - normal_cdf((f.center - u) / s)), 0};
    case Shape::Kind::ramp:
      return {f.amp / f.width *
                  (detail::call_payoff(u, s, f.center) - detail::call_payoff(u, s, f.center + f.width)),
              0};
    case Shape::Kind::tent: {
      // (c+w-X) 1{c <= X < c+w} = (c+w-X)^+ - w 1{X<c} - (c-X)^+
      const double a = f.center + f.width;
      const double put_a = detail::call_payoff(-u, s, -a);
      const double put_c = detail::call_payoff(-u, s, -f.center);
      return {f.amp / f.width * (put_a - f.width * normal_cdf((f.center - u) / s) - put_c), 0};
    }
    case Shape::Kind::bump:
      return detail::split_gaussian_average([&](double v) { return f.value(v); }, u, s,
                                            f.center - f.width, f.center + f.width);
    case Shape::Kind::tanh:
      return detail::gaussian_average([&](double v) { return f.value(v); }, u, s);
  }
  return {};
}

/// d/du T_r f(u).
inline SemigroupValue heat_gradient(const Shape& f, double r, double gamma, double u) {
  if (r <= 0) return {f.derivative(u), 0};
  const double s = std::sqrt(2 * r / gamma);
  const double z = (u - f.center);
  switch (f.kind) {
    case Shape::Kind::constant: return {0, 0};
    case Shape::Kind::gaussian: {
      const double w2 = f.width * f.width + s * s;
      return {-f.amp * f.width / std::sqrt(w2) * z / w2 * std::exp(-0.5 * z * z / w2), 0};
    }
    case Shape::Kind::indicator:
      return {f.amp / s *
                  (normal_pdf((f.center - u) / s) - normal_pdf((f.center + f.width - u) / s)),
              0};
    case Shape::Kind::ramp:
      return {f.amp / f.width *
                  (normal_cdf((u - f.center) / s) - normal_cdf((u - f.center - f.width) / s)),
              0};
    case Shape::Kind::tent: {
      const double a = f.center + f.width;
      return {f.amp / f.width *
                  (-normal_cdf((a - u) / s) + f.width / s * normal_pdf((f.center - u) / s) +
                   normal_cdf((f.center - u) / s)),
              0};
    }
    case Shape::Kind::bump:
      return detail::split_gaussian_average([&](double v) { return f.derivative(v); }, u, s,
                                            f.center - f.width, f.center + f.width);
    case Shape::Kind::tanh:
      return detail::gaussian_average([&](double v) { return f.derivative(v); }, u, s);
  }
  return {};
}

}  // namespace rcsep
