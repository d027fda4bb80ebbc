#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcsep/dynamics.hpp"
#include "rcsep/environment.hpp"
#include "rcsep/error.hpp"
#include "rcsep/functions.hpp"
#include "rcsep/oracle.hpp"
#include "rcsep/pde.hpp"
#include "rcsep/rng.hpp"
#include "rcsep/stats.hpp"
#include "rcsep/transform.hpp"

namespace rcsep {

using nlohmann::json;

inline const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids = {"hydro",        "density-clt", "current-clt", "tagged-clt",
                                               "correlations", "nash",        "liggett",     "hitting"};
  return ids;
}

/// Macroscopic half-width that keeps a heat kernel of variance 2T/gamma away from the buffer.
inline double heat_half_width(double T, double gamma, double extra = 0.25) {
  return std::max(1.0, 3 * std::sqrt(2 * T / gamma) + extra);
}

/// "uniform:a:b", "constant:c" or "two-point:a:b:p".
inline DisorderLaw parse_law(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  auto num = [&](std::size_t i) {
    require(i < parts.size(), "environment", "law descriptor '" + text + "' is missing parameters");
    return std::stod(parts[i]);
  };
  require(!parts.empty(), "environment", "empty law descriptor");
  if (parts[0] == "uniform" && parts.size() == 3) return DisorderLaw::uniform(num(1), num(2));
  if (parts[0] == "constant" && parts.size() == 2) return DisorderLaw::constant(num(1));
  if (parts[0] == "two-point" && parts.size() == 4) return DisorderLaw::two_point(num(1), num(2), num(3));
  throw Error("environment", "unknown law descriptor '" + text + "' (uniform:a:b, constant:c, two-point:a:b:p)");
}

// ---- configuration ------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment = "hydro";
  int N = 256;
  long replicas = 200;
  double horizon = 0.5;
  std::vector<double> sample_times;
  Shape profile = Shape::tanh_front(0.25, 0.75, 0, 1);
  DisorderLaw law = DisorderLaw::uniform(0.25, 0.75);
  double epsilon = 0.25;
  std::optional<std::uint64_t> env_seed;
  std::uint64_t master_seed = 1;
  CutoffConvention cutoff{Cutoff::fixed, 1.0};
  double half_width = 0;  // 0 picks a window from the horizon
  Boundary boundary = Boundary::frozen_buffer;
  Engine engine = Engine::stirring;
  int threads = 1;
  std::string output_dir = "rcsep-out";
  std::string env_file;
  std::vector<Shape> tests;
  double s = 0.25;
  std::vector<int> N_list;
  int K = 8;
  long a = 5, b = -4;
  int env_seeds = 20;
  int random_functions = 5;
  bool write_samples = false;
  json resolved;  // the merged document, echoed into reports

  std::uint64_t resolved_env_seed() const {
    return env_seed ? *env_seed : hash_combine(master_seed, hash_string("env/" + experiment));
  }
  std::uint64_t replica_seed() const { return hash_combine(master_seed, hash_string("mc/" + experiment)); }
};

inline json default_config(const std::string& id) {
  const json tanh = Shape::tanh_front(0.25, 0.75, 0, 1);
  const json gauss = Shape::gaussian(1, 0, 0.25);
  json j = {{"experiment", id},
            {"N", 256},
            {"replicas", 200},
            {"horizon", 0.5},
            {"profile", tanh},
            {"law", DisorderLaw::uniform(0.25, 0.75)},
            {"epsilon", 0.25},
            {"master_seed", 1},
            {"cutoff", "fixed:1"},
            {"half_width", 0.0},
            {"boundary", "frozen-buffer"},
            {"engine", "stirring"},
            {"threads", 1},
            {"output_dir", "rcsep-out/" + id},
            {"write_samples", false}};
  if (id == "hydro") {
    j["sample_times"] = {0.0, 0.1, 0.25, 0.5};
    j["tests"] = {Shape::bump(1, -0.5, 0.5), Shape::bump(1, 0, 0.5), Shape::gaussian(1, 0.5, 0.25)};
  } else if (id == "density-clt") {
    j["replicas"] = 5000;
    j["sample_times"] = {0.0, 0.25, 0.5};
    j["s"] = 0.25;
    j["tests"] = {gauss, gauss};
  } else if (id == "current-clt") {
    j["replicas"] = 5000;
    j["sample_times"] = {0.25, 0.5};
    j["s"] = 0.25;
  } else if (id == "tagged-clt") {
    j["replicas"] = 5000;
    j["sample_times"] = {0.25, 0.5};
    j["s"] = 0.25;
  } else if (id == "correlations") {
    j["N"] = 64;
    j["horizon"] = 1.0;
    j["half_width"] = 2.5;
    j["sample_times"] = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    j["N_list"] = {64, 128, 256, 512};
  } else if (id == "nash") {
    j["N"] = 16;
    j["horizon"] = 10.0;
    j["half_width"] = 10.0;
    j["law"] = DisorderLaw::uniform(0.25, 4.0);
    j["env_seeds"] = 20;
  } else if (id == "liggett") {
    j["N"] = 16;
    j["K"] = 8;
    j["horizon"] = 1.0;
    j["sample_times"] = {0.1, 1.0};
    j["law"] = DisorderLaw::uniform(0.25, 4.0);
    j["random_functions"] = 5;
  } else if (id == "hitting") {
    j["N"] = 16;
    j["horizon"] = 100.0;
    j["half_width"] = 25.0;
    j["replicas"] = 100000;
    j["a"] = 5;
    j["b"] = -4;
  } else {
    throw Error("cli", "unknown experiment '" + id + "'");
  }
  return j;
}

/// Merges `user` over the experiment's defaults and validates the result.
inline ExperimentConfig parse_config(const json& user) {
  require(user.is_object(), "cli", "config must be a JSON object");
  require(user.contains("experiment"), "cli", "config needs an \"experiment\" field");
  const std::string id = user.at("experiment");
  json j = default_config(id);
  j.merge_patch(user);
  ExperimentConfig c;
  try {
    c.experiment = id;
    c.N = j.at("N");
    c.replicas = j.at("replicas");
    c.horizon = j.at("horizon");
    if (j.contains("sample_times")) c.sample_times = j.at("sample_times").get<std::vector<double>>();
    c.profile = j.at("profile").get<Shape>();
    c.law = j.at("law").is_string() ? parse_law(j.at("law")) : j.at("law").get<DisorderLaw>();
    c.epsilon = j.at("epsilon");
    if (j.contains("env_seed") && !j.at("env_seed").is_null()) c.env_seed = j.at("env_seed").get<std::uint64_t>();
    c.master_seed = j.at("master_seed");
    c.cutoff = parse_cutoff(j.at("cutoff"));
    c.half_width = j.at("half_width");
    c.boundary = boundary_from_string(j.at("boundary"));
    c.engine = engine_from_string(j.at("engine"));
    c.threads = j.at("threads");
    c.output_dir = j.at("output_dir");
    c.env_file = j.value("env_file", std::string());
    if (j.contains("tests")) c.tests = j.at("tests").get<std::vector<Shape>>();
    c.s = j.value("s", 0.25);
    if (j.contains("N_list")) c.N_list = j.at("N_list").get<std::vector<int>>();
    c.K = j.value("K", 8);
    c.a = j.value("a", 5L);
    c.b = j.value("b", -4L);
    c.env_seeds = j.value("env_seeds", 20);
    c.random_functions = j.value("random_functions", 5);
    c.write_samples = j.at("write_samples");
  } catch (const json::exception& e) {
    throw Error("cli", std::string("malformed config: ") + e.what());
  }
  require(c.N >= 16, "cli", "N = " + std::to_string(c.N) + " is below the minimum of 16");
  require(c.horizon > 0, "cli", "horizon T must be positive");
  require(c.replicas >= 2, "cli", "need at least two replicas");
  for (double t : c.sample_times)
    require(t >= 0 && t <= c.horizon, "cli", "sample times must lie in [0, T]");
  c.profile.validate_profile();
  j["env_seed"] = c.resolved_env_seed();
  c.resolved = j;
  return c;
}

// ---- reports ----------------------------------------------------------------

struct Check {
  std::string name;
  double mc = 0, se = 0, theory = 0, quad_err = 0;
  double tolerance = 0;
  bool pass = false;
  std::string detail;
};

inline void to_json(json& j, const Check& c) {
  j = {{"name", c.name}, {"mc", c.mc},         {"se", c.se},     {"theory", c.theory},
       {"quad_err", c.quad_err}, {"tolerance", c.tolerance}, {"pass", c.pass}};
  if (!c.detail.empty()) j["detail"] = c.detail;
}

inline void from_json(const json& j, Check& c) {
  c.name = j.at("name");
  c.mc = j.value("mc", 0.0);
  c.se = j.value("se", 0.0);
  c.theory = j.value("theory", 0.0);
  c.quad_err = j.value("quad_err", 0.0);
  c.tolerance = j.value("tolerance", 0.0);
  c.pass = j.at("pass");
  c.detail = j.value("detail", std::string());
}

/// |mc - theory| <= max(k SE, floor).
inline Check within(std::string name, double mc, double se, double theory, double k, double floor = 0,
                    double quad_err = 0) {
  Check c{std::move(name), mc, se, theory, quad_err, std::max(k * se, floor), false, {}};
  c.pass = std::abs(mc - theory) <= c.tolerance + quad_err;
  return c;
}

struct Report {
  std::string experiment;
  int N = 0;
  long M = 0;
  std::uint64_t env_seed = 0;
  std::vector<Check> checks;
  json extra = json::object();
  json config = json::object();
  std::vector<std::string> warnings;

  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return !checks.empty();
  }
  const Check& headline() const {
    require(!checks.empty(), "cli", "report has no checks");
    return checks.front();
  }
};

inline json report_to_json(const Report& r) {
  json j = {{"experiment", r.experiment}, {"N", r.N}, {"M", r.M}, {"env_seed", r.env_seed}};
  if (!r.checks.empty()) {
    const auto& h = r.headline();
    j["mc"] = h.mc;
    j["se"] = h.se;
    j["theory"] = h.theory;
    j["quad_err"] = h.quad_err;
  }
  j["pass"] = r.pass();
  j["checks"] = r.checks;
  j["results"] = r.extra;
  j["warnings"] = r.warnings;
  j["config"] = r.config;
  return j;
}

/// Plain-text rendering of a report document.
inline std::string render_report(const json& j) {
  std::ostringstream os;
  os << "experiment " << j.value("experiment", std::string("?")) << "  N=" << j.value("N", 0)
     << "  M=" << j.value("M", 0L) << "  env_seed=" << j.value("env_seed", std::uint64_t(0)) << "\n";
  os << "overall: " << (j.value("pass", false) ? "PASS" : "FAIL") << "\n";
  if (j.contains("checks"))
    for (const auto& c : j.at("checks")) {
      os << "  [" << (c.value("pass", false) ? "pass" : "FAIL") << "] " << c.value("name", std::string());
      os << std::setprecision(6) << "  mc=" << c.value("mc", 0.0) << "  se=" << c.value("se", 0.0)
         << "  theory=" << c.value("theory", 0.0) << "  tol=" << c.value("tolerance", 0.0);
      if (c.contains("detail")) os << "  (" << c.at("detail").get<std::string>() << ")";
      os << "\n";
    }
  if (j.contains("warnings"))
    for (const auto& w : j.at("warnings")) os << "  warning: " << w.get<std::string>() << "\n";
  return os.str();
}

inline Environment load_environment(const std::string& path) {
  std::ifstream f(path);
  require(bool(f), "environment", "cannot open environment file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw Error("environment", "malformed environment file " + path + ": " + e.what());
  }
  return environment_from_json(j);
}

/// The configured environment: the env file when given, else generated on the window.
inline Environment config_environment(const ExperimentConfig& c, const LatticeWindow& w) {
  if (!c.env_file.empty()) return load_environment(c.env_file);
  return Environment::generate(c.resolved_env_seed(), c.law, w, c.epsilon);
}

// ---- ensembles --------------------------------------------------------------

struct EnsembleSpec {
  int N = 256;
  long M = 1000;
  double T = 0.5;
  std::vector<double> times;
  Shape profile = Shape::tanh_front(0.25, 0.75, 0, 1);
  DisorderLaw law = DisorderLaw::uniform(0.25, 0.75);
  double epsilon = 0.25;
  std::uint64_t env_seed = 20240601, master_seed = 1;
  bool starred = false;
  double half_width = 0;  // 0: heat_half_width(T, gamma)
  Boundary boundary = Boundary::frozen_buffer;
  Engine engine = Engine::stirring;
  int threads = 1;
  std::vector<std::pair<std::string, Shape>> fields;       // Y^N(G)
  std::vector<std::pair<std::string, Shape>> densities;    // <pi^N, G>
  std::vector<std::pair<std::string, Shape>> corrected;    // X^N(G) and Z^N(G) with cutoff l
  std::vector<std::pair<std::string, Shape>> martingales;  // X^N(G) with drift and QV integrals
  double cutoff_l = 1;
  bool current = true;  // J_{-1,0}
  std::optional<Environment> env;  // replaces (env_seed, law, window) when set

  json key() const {
    auto named = [](const std::vector<std::pair<std::string, Shape>>& v) {
      json a = json::array();
      for (const auto& [n, s] : v) a.push_back({n, s});
      return a;
    };
    return {{"N", N},
            {"M", M},
            {"T", T},
            {"times", times},
            {"profile", profile},
            {"law", law},
            {"epsilon", epsilon},
            {"env_seed", env_seed},
            {"master_seed", master_seed},
            {"starred", starred},
            {"half_width", half_width},
            {"boundary", to_string(boundary)},
            {"engine", to_string(engine)},
            {"fields", named(fields)},
            {"densities", named(densities)},
            {"corrected", named(corrected)},
            {"martingales", named(martingales)},
            {"cutoff_l", cutoff_l},
            {"current", current},
            {"env", env ? environment_to_json(*env, true) : json()}};
  }
};

struct Ensemble {
  EnsembleSpec spec;
  Environment env;
  DiscreteTrajectory traj;
  std::map<std::string, TransformedFunction> transforms;
  std::vector<ObservableSeries> batch;
  double seconds = 0;
  long long events = 0;
  long tagged_lost = 0;

  std::size_t time_index(double t) const {
    for (std::size_t k = 0; k < spec.times.size(); ++k)
      if (std::abs(spec.times[k] - t) < 1e-12) return k;
    throw Error("stats", "time " + std::to_string(t) + " was not sampled");
  }
  std::vector<double> linear(const std::string& name, double t) const {
    const auto& names = batch.front().linear_names;
    const auto it = std::find(names.begin(), names.end(), name);
    require(it != names.end(), "stats", "observable '" + name + "' was not recorded");
    const auto o = std::size_t(it - names.begin());
    const auto k = time_index(t);
    std::vector<double> v;
    for (const auto& s : batch) v.push_back(s.linear[o][k]);
    return v;
  }
  std::vector<double> current(double t) const {
    const auto k = time_index(t);
    std::vector<double> v;
    for (const auto& s : batch) v.push_back(double(s.currents.at(0)[k]));
    return v;
  }
  std::vector<double> tagged(double t) const {
    const auto k = time_index(t);
    std::vector<double> v;
    for (const auto& s : batch) v.push_back(double(s.tagged.at(k)));
    return v;
  }
  /// M_t(G) = X_t(G) - X_0(G) - int_0^t L X_s(G) ds and the recorded quadratic variation.
  std::pair<std::vector<double>, std::vector<double>> martingale(const std::string& name, double t) const {
    const auto& in = batch.front().integral_names;
    const auto it = std::find(in.begin(), in.end(), name);
    require(it != in.end(), "stats", "martingale '" + name + "' was not recorded");
    const auto o = std::size_t(it - in.begin());
    const auto X = linear("X:" + name, t), X0 = linear("X:" + name, 0.0);
    const auto k = time_index(t);
    std::vector<double> m, q;
    for (std::size_t r = 0; r < batch.size(); ++r) {
      m.push_back(X[r] - X0[r] - batch[r].drift_integral[o][k]);
      q.push_back(batch[r].qv_integral[o][k]);
    }
    return {m, q};
  }
};

inline std::map<std::string, std::unique_ptr<Ensemble>>& ensemble_cache() {
  static std::map<std::string, std::unique_ptr<Ensemble>> cache;
  return cache;
}

/// Runs (or recalls) M replicas on one environment. Every replica starts from product
/// Bernoulli(rho0(x/N)) drawn from stream purpose 0 and evolves on purpose 1.
inline const Ensemble& run_ensemble(const EnsembleSpec& spec) {
  const std::string key = spec.key().dump();
  auto& cache = ensemble_cache();
  if (auto it = cache.find(key); it != cache.end()) return *it->second;

  const auto start = std::chrono::steady_clock::now();
  auto e = std::make_unique<Ensemble>();
  e->spec = spec;
  const double gamma = spec.env ? spec.env->gamma_law() : spec.law.mean_inverse();
  double A = spec.half_width > 0 ? spec.half_width : heat_half_width(spec.T, gamma);
  if (!spec.corrected.empty() || !spec.martingales.empty()) A = std::max(A, spec.cutoff_l + 0.5);
  for (const auto* list : {&spec.fields, &spec.densities, &spec.corrected, &spec.martingales})
    for (const auto& [n, G] : *list) {
      const auto [lo, hi] = G.support();
      if (std::isfinite(lo) && std::isfinite(hi)) A = std::max(A, std::max(-lo, hi) + 2.0 / spec.N);
    }
  e->env = spec.env ? *spec.env
                    : Environment::generate(spec.env_seed, spec.law, LatticeWindow::centered(spec.N, A, spec.boundary),
                                            spec.epsilon);
  const LatticeWindow w = e->env.window();
  e->traj = solve_discrete(e->env, spec.profile, spec.times, spec.starred);

  ObservableRequest req;
  for (const auto& [n, G] : spec.fields) req.linear.push_back(fluctuation_observable("Y:" + n, sample(G, w), e->traj.profiles));
  for (const auto& [n, G] : spec.densities) req.linear.push_back(empirical_observable("pi:" + n, sample(G, w)));
  for (const auto& [n, G] : spec.corrected) {
    const auto F = apply_Tl(e->env, sample(G, w), spec.cutoff_l);
    req.linear.push_back(corrected_observable("X:" + n, F));
    req.linear.push_back(corrected_fluctuation_observable("Z:" + n, F, e->traj.profiles));
    e->transforms.emplace(n, F);
  }
  for (const auto& [n, G] : spec.martingales) {
    const auto F = apply_Tl(e->env, sample(G, w), spec.cutoff_l);
    req.linear.push_back(corrected_observable("X:" + n, F));
    req.integrals.push_back(martingale_integrands(n, e->env, F));
    e->transforms.emplace(n, F);
  }
  if (spec.current) req.current_bonds = {-1};
  req.tagged = spec.starred;

  const Simulator sim(e->env, spec.engine);
  e->batch.resize(std::size_t(spec.M));
  for_each_replica(spec.M, spec.threads, [&](long r) {
    RandomStream init = replica_stream(spec.master_seed, std::uint64_t(r), 0);
    const Configuration c = init_configuration(e->env, spec.profile, init, spec.starred);
    auto s = sim.run(c, spec.T, spec.times, req, spec.master_seed, std::uint64_t(r));
    s.env_seed = spec.env_seed;
    e->batch[std::size_t(r)] = std::move(s);
  });
  for (const auto& s : e->batch) {
    e->events += s.event_count;
    e->tagged_lost += s.tagged_lost;
  }
  e->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return *cache.emplace(key, std::move(e)).first->second;
}

// ---- small numerical helpers --------------------------------------------------

/// <rho_t, G> = int T_t rho0 (u) G(u) du for G of bounded support.
inline SemigroupValue heat_pairing(double gamma, const Shape& rho0, double t, const Shape& G, double tol = 1e-10) {
  const auto [lo, hi] = G.support();
  require(std::isfinite(lo) && std::isfinite(hi), "stats", "test function must have bounded support");
  std::vector<double> pts = detail::kinks(G);
  for (double k : detail::kinks(rho0)) pts.push_back(k);
  double err = 0;
  auto v = detail::integrate_pieces(
      [&](double u) {
        const auto r = heat_apply(rho0, t, gamma, u);
        err = std::max(err, r.error);
        return r.value * G.value(u);
      },
      lo, hi, pts, tol);
  v.error += err * (hi - lo);
  return v;
}

inline double integral_of_square(const Shape& G) {
  const auto [lo, hi] = G.support();
  return detail::integrate_pieces([&](double u) { return G.value(u) * G.value(u); }, lo, hi, detail::kinks(G), 1e-12)
      .value;
}

inline Estimate variance_estimate(const std::vector<double>& x) {
  std::vector<std::vector<double>> rows;
  for (double v : x) rows.push_back({v});
  const auto c = estimate_covariance(rows, {"x"}, std::vector<std::uint64_t>(x.size(), 0), 0);
  return {c.cov[0][0], c.cov_se[0][0]};
}

inline Estimate covariance_estimate(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "stats", "paired samples differ in length");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < x.size(); ++i) rows.push_back({x[i], y[i]});
  const auto c = estimate_covariance(rows, {"x", "y"}, std::vector<std::uint64_t>(x.size(), 0), 0);
  return {c.cov[0][1], c.cov_se[0][1]};
}

inline std::vector<double> scaled(std::vector<double> v, double a, double shift = 0) {
  for (auto& x : v) x = a * (x - shift);
  return v;
}

inline std::vector<double> log_grid(double a, double b, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(a * std::pow(b / a, double(i) / (n - 1)));
  return g;
}

// ---- file output --------------------------------------------------------------

class OutputDir {
 public:
  explicit OutputDir(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }
  bool enabled() const { return !dir_.empty(); }
  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }
  /// Opens a CSV with fixed precision so identical runs give identical bytes.
  std::ofstream csv(const std::string& name) const {
    std::ofstream f(path(name));
    require(bool(f), "cli", "cannot write " + path(name));
    f << std::setprecision(12);
    return f;
  }

 private:
  std::string dir_;
};

inline void write_samples_csv(const OutputDir& out, const Ensemble& e) {
  auto f = out.csv("samples.csv");
  write_series_csv_header(f, e.batch.front());
  for (const auto& s : e.batch) write_series_csv_rows(f, s);
}

// ---- experiments ------------------------------------------------------------------

inline EnsembleSpec ensemble_from(const ExperimentConfig& c) {
  EnsembleSpec s;
  s.N = c.N;
  s.M = c.replicas;
  s.T = c.horizon;
  s.times = c.sample_times;
  if (s.times.empty() || s.times.back() < c.horizon) s.times.push_back(c.horizon);
  s.profile = c.profile;
  s.law = c.law;
  s.epsilon = c.epsilon;
  s.env_seed = c.resolved_env_seed();
  s.master_seed = c.replica_seed();
  s.half_width = c.half_width;
  s.boundary = c.boundary;
  s.engine = c.engine;
  s.threads = c.threads;
  s.cutoff_l = c.cutoff.width(c.N);
  if (!c.env_file.empty()) {
    s.env = load_environment(c.env_file);
    require(s.env->N() == c.N, "cli", "environment file has N = " + std::to_string(s.env->N()) + " but the config asks for " + std::to_string(c.N));
    s.env_seed = s.env->seed();
  }
  return s;
}

inline Report start_report(const ExperimentConfig& c, int N, long M, std::uint64_t env_seed) {
  Report r;
  r.experiment = c.experiment;
  r.N = N;
  r.M = M;
  r.env_seed = env_seed;
  r.config = c.resolved;
  return r;
}

inline void note_ensemble(Report& r, const Ensemble& e) {
  r.extra["gamma_law"] = e.spec.law.mean_inverse();
  r.extra["gamma_hat"] = e.env.gamma_hat();
  r.extra["window"] = e.env.window();
  r.extra["events"] = e.events;
  for (const auto& s : e.batch)
    for (const auto& w : s.warnings)
      if (std::find(r.warnings.begin(), r.warnings.end(), w) == r.warnings.end()) r.warnings.push_back(w);
}

inline Report run_hydro(const ExperimentConfig& c, const OutputDir& out) {
  auto spec = ensemble_from(c);
  for (std::size_t i = 0; i < c.tests.size(); ++i) {
    spec.densities.push_back({"G" + std::to_string(i + 1), c.tests[i]});
    spec.corrected.push_back({"G" + std::to_string(i + 1), c.tests[i]});
  }
  const auto& e = run_ensemble(spec);
  Report r = start_report(c, c.N, c.replicas, spec.env_seed);
  note_ensemble(r, e);
  const double gamma = c.law.mean_inverse();
  auto f = out.csv("hydro.csv");
  f << "t,test,mc,se,theory,corrected_mc,corrected_se\n";
  double sup_err = 0;
  for (double t : spec.times) {
    for (std::size_t i = 0; i < c.tests.size(); ++i) {
      const std::string n = "G" + std::to_string(i + 1);
      const auto m = mean_estimate(e.linear("pi:" + n, t));
      const auto th = heat_pairing(gamma, c.profile, t, c.tests[i]);
      // corrected measure: gamma <pi, G> is approximated by X(G)
      const auto x = mean_estimate(scaled(e.linear("X:" + n, t), 1.0 / e.transforms.at(n).gamma));
      f << t << ',' << n << ',' << m.value << ',' << m.se << ',' << th.value << ',' << x.value << ',' << x.se << '\n';
      sup_err = std::max(sup_err, std::abs(m.value - th.value));
      if (t > 0) r.checks.push_back(within("<pi_t," + n + "> at t=" + std::to_string(t), m.value, m.se, th.value, 3, 0.01, th.error));
    }
  }
  r.extra["sup_weak_error"] = sup_err;
  r.extra["cutoff"] = c.cutoff.describe();
  if (c.write_samples) write_samples_csv(out, e);
  return r;
}

inline Report run_density_clt(const ExperimentConfig& c, const OutputDir& out) {
  require(c.tests.size() >= 2, "cli", "density-clt needs two test functions G and H");
  auto spec = ensemble_from(c);
  spec.fields = {{"G", c.tests[0]}, {"H", c.tests[1]}};
  if (c.cutoff.kind == Cutoff::fixed) spec.corrected = {{"G", c.tests[0]}, {"H", c.tests[1]}};
  auto times = spec.times;
  if (std::find(times.begin(), times.end(), c.s) == times.end()) {
    times.push_back(c.s);
    std::sort(times.begin(), times.end());
    spec.times = times;
  }
  const auto& e = run_ensemble(spec);
  Report r = start_report(c, c.N, c.replicas, spec.env_seed);
  note_ensemble(r, e);
  const double gamma = c.law.mean_inverse(), t = c.horizon;
  const auto th = theory_density_covariance(gamma, c.profile, c.s, t, c.tests[0], c.tests[1]);
  const auto mc = covariance_estimate(e.linear("Y:G", c.s), e.linear("Y:H", t));
  r.checks.push_back(within("Cov(Y_s(G), Y_t(H))", mc.value, mc.se, th.value, 3, 0, th.error));
  auto f = out.csv("covariance.csv");
  f << "s,t,field,mc,se,theory,quad_err\n";
  for (double tt : spec.times) {
    const auto tv = theory_density_covariance(gamma, c.profile, tt, tt, c.tests[0], c.tests[0]);
    const auto v = variance_estimate(e.linear("Y:G", tt));
    f << tt << ',' << tt << ",Y," << v.value << ',' << v.se << ',' << tv.value << ',' << tv.error << '\n';
    r.checks.push_back(within("Var(Y_t(G)) at t=" + std::to_string(tt), v.value, v.se, tv.value, 3, 0, tv.error));
    if (!spec.corrected.empty()) {
      const auto z = variance_estimate(e.linear("Z:G", tt));
      f << tt << ',' << tt << ",Z," << z.value << ',' << z.se << ',' << tv.value << ',' << tv.error << '\n';
    }
  }
  f << c.s << ',' << t << ",Y," << mc.value << ',' << mc.se << ',' << th.value << ',' << th.error << '\n';
  if (c.replicas >= 2000) {
    const auto sh = clt_shape_test(e.linear("Y:G", t), theory_density_covariance(gamma, c.profile, t, t, c.tests[0], c.tests[0]).value);
    Check k{"shape test of Y_t(G)", sh.ks_distance, 0, 0, 0, 0, sh.pass,
            "p=" + std::to_string(sh.p_value) + " skew=" + std::to_string(sh.skewness) +
                " exkurt=" + std::to_string(sh.excess_kurtosis)};
    r.checks.push_back(k);
  }
  if (c.cutoff.kind != Cutoff::fixed)
    r.warnings.push_back("Z fields skipped: the quarter-power ramp does not fit the simulation window");
  if (c.write_samples) write_samples_csv(out, e);
  return r;
}

inline Report run_current_clt(const ExperimentConfig& c, const OutputDir& out) {
  auto spec = ensemble_from(c);
  if (std::find(spec.times.begin(), spec.times.end(), c.s) == spec.times.end()) {
    spec.times.push_back(c.s);
    std::sort(spec.times.begin(), spec.times.end());
  }
  const auto& e = run_ensemble(spec);
  Report r = start_report(c, c.N, c.replicas, spec.env_seed);
  note_ensemble(r, e);
  const double gamma = c.law.mean_inverse(), t = c.horizon, N = c.N;
  const auto J = e.current(t);
  const auto lln = mean_estimate(scaled(J, 1 / N));
  r.checks.push_back(within("E J_{-1,0}(t)/N", lln.value, lln.se, -boundary_flux_integral(c.profile, gamma, t) / gamma, 3, 0.01));
  const auto th = theory_current_covariance(gamma, c.profile, t, t);
  const auto v = variance_estimate(scaled(J, 1 / std::sqrt(N)));
  r.checks.push_back(within("Var(J_t/sqrt N)", v.value, v.se, th.value, 3, 0, th.error));
  const auto thc = theory_current_covariance(gamma, c.profile, c.s, t);
  const auto cv = covariance_estimate(scaled(e.current(c.s), 1 / std::sqrt(N)), scaled(J, 1 / std::sqrt(N)));
  r.checks.push_back(within("Cov(J_s, J_t)/N", cv.value, cv.se, thc.value, 3, 0, thc.error));
  const auto dual = theory_current_covariance_dual(gamma, c.profile, t, t);
  Check d{"dual quadrature route", dual.value, 0, th.value, dual.error, 1e-4, std::abs(dual.value - th.value) <= 1e-4, {}};
  r.checks.push_back(d);
  if (c.replicas >= 2000) {
    const auto sh = clt_shape_test(scaled(J, 1 / std::sqrt(N)), th.value, 1 / std::sqrt(N));
    r.checks.push_back({"shape test of J_t/sqrt N", sh.ks_distance, 0, 0, 0, 0, sh.pass, "p=" + std::to_string(sh.p_value)});
  }
  auto f = out.csv("current.csv");
  f << "t,mean_J_over_N,se,var_J_over_sqrtN,se\n";
  for (double tt : spec.times) {
    const auto m = mean_estimate(scaled(e.current(tt), 1 / N));
    const auto vv = variance_estimate(scaled(e.current(tt), 1 / std::sqrt(N)));
    f << tt << ',' << m.value << ',' << m.se << ',' << vv.value << ',' << vv.se << '\n';
  }
  if (c.write_samples) write_samples_csv(out, e);
  return r;
}

inline Report run_tagged_clt(const ExperimentConfig& c, const OutputDir& out) {
  auto spec = ensemble_from(c);
  spec.starred = true;
  if (std::find(spec.times.begin(), spec.times.end(), c.s) == spec.times.end()) {
    spec.times.push_back(c.s);
    std::sort(spec.times.begin(), spec.times.end());
  }
  const auto& e = run_ensemble(spec);
  Report r = start_report(c, c.N, c.replicas, spec.env_seed);
  note_ensemble(r, e);
  if (e.tagged_lost > 0) r.warnings.push_back(std::to_string(e.tagged_lost) + " replicas lost the tagged particle");
  const double gamma = c.law.mean_inverse(), t = c.horizon, N = c.N;
  const auto u = compute_ut(gamma, c.profile, spec.times);
  const std::size_t kt = e.time_index(t);
  const double ut = u.u_ode[kt];
  const long utN = compute_utN(e.traj.profiles[kt]);
  const auto X = e.tagged(t);
  const auto m = mean_estimate(scaled(X, 1 / N));
  Check lln = within("E X_t/N vs u_t", m.value, m.se, ut, 0, 0.05);
  r.checks.push_back(lln);
  Check cen = within("u_t^N/N vs u_t", double(utN) / N, 0, ut, 0, 0.02);
  r.checks.push_back(cen);
  const auto W = scaled(X, 1 / std::sqrt(N), double(utN));
  const auto th = theory_tagged_covariance(gamma, c.profile, t, t);
  const auto v = variance_estimate(W);
  r.checks.push_back(within("Var(W_t)", v.value, v.se, th.value, 4, 0, th.error));
  if (c.replicas >= 2000) {
    const auto sh = clt_shape_test(W, th.value, 1 / std::sqrt(N));
    r.checks.push_back({"shape test of W_t", sh.ks_distance, 0, 0, 0, 0, sh.pass, "p=" + std::to_string(sh.p_value)});
  }
  r.extra["u_t"] = ut;
  r.extra["u_t_N"] = utN;
  auto f = out.csv("tagged.csv");
  f << "t,u_t,u_t_N,mean_X_over_N,se,var_W,se\n";
  for (std::size_t k = 0; k < spec.times.size(); ++k) {
    const double tt = spec.times[k];
    const long un = compute_utN(e.traj.profiles[k]);
    const auto mm = mean_estimate(scaled(e.tagged(tt), 1 / N));
    const auto vv = variance_estimate(scaled(e.tagged(tt), 1 / std::sqrt(N), double(un)));
    f << tt << ',' << u.u_ode[k] << ',' << un << ',' << mm.value << ',' << mm.se << ',' << vv.value << ',' << vv.se << '\n';
  }
  if (c.write_samples) write_samples_csv(out, e);
  return r;
}

struct ScalingResult {
  std::vector<int> Ns;
  std::vector<double> sups;
  std::vector<double> seconds;
  LineFit fit;
};

/// sup over t <= T of sup |phi_t| for each N on the window [-A N, A N].
inline ScalingResult correlation_scaling(const std::vector<int>& Ns, const Shape& rho0, const DisorderLaw& law,
                                         double eps, std::uint64_t env_seed, double A,
                                         const std::vector<double>& t_grid) {
  ScalingResult s;
  for (int N : Ns) {
    const auto start = std::chrono::steady_clock::now();
    const auto env = Environment::generate(env_seed, law, LatticeWindow::centered(N, A, Boundary::frozen_buffer), eps);
    TwoPointOptions opt;
    opt.store_fields = false;
    const auto res = two_point_ode(env, rho0, t_grid, opt);
    s.Ns.push_back(N);
    s.sups.push_back(res.running_sup.back());
    s.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::vector<double> x(s.Ns.begin(), s.Ns.end());
  if (x.size() >= 2) s.fit = loglog_fit(x, s.sups);
  return s;
}

inline Report run_correlations(const ExperimentConfig& c, const OutputDir& out) {
  Report r = start_report(c, c.N, 0, c.resolved_env_seed());
  const double A = c.half_width > 0 ? c.half_width : 2.5;
  std::vector<double> grid = c.sample_times;
  if (grid.empty() || grid.back() < c.horizon) grid.push_back(c.horizon);
  const auto env = config_environment(c, LatticeWindow::centered(c.N, A, c.boundary));
  const auto res = two_point_ode(env, c.profile, grid);
  {
    auto f = out.csv("two_point_sup.csv");
    f << "t,sup_phi,running_sup\n";
    for (std::size_t k = 0; k < res.times.size(); ++k) f << res.times[k] << ',' << res.sup[k] << ',' << res.running_sup[k] << '\n';
  }
  if (env.window().sites() <= 200) {
    auto f = out.csv("two_point.csv");
    write_two_point_csv(f, res);
  }
  r.extra["method"] = res.method;
  r.extra["sup_phi"] = res.running_sup.back();
  r.extra["N_sup_phi"] = res.running_sup.back() * c.N;
  Check bound{"sup |phi| <= 1/4", res.running_sup.back(), 0, 0.25, 0, 0, res.running_sup.back() <= 0.25, {}};
  r.checks.push_back(bound);
  if (c.N_list.size() >= 2) {
    const auto sc = correlation_scaling(c.N_list, c.profile, c.law, c.epsilon, r.env_seed, A, grid);
    auto f = out.csv("scaling.csv");
    f << "N,sup_phi,seconds\n";
    for (std::size_t i = 0; i < sc.Ns.size(); ++i) f << sc.Ns[i] << ',' << sc.sups[i] << ',' << sc.seconds[i] << '\n';
    r.extra["scaling"] = {{"exponent", sc.fit.slope}, {"constant", std::exp(sc.fit.intercept)}, {"residual", sc.fit.residual}};
    r.checks.push_back({"log-log slope of sup|phi| in N", sc.fit.slope, 0, -1, 0, 0.15,
                        sc.fit.slope >= -1.15 && sc.fit.slope <= -0.85, {}});
  }
  return r;
}

struct NashRun {
  NashReport report;
  std::vector<WalkKernel> fit, heldout;
};

inline NashRun nash_run(int seeds, std::uint64_t seed0, const DisorderLaw& law, double eps, int N, double A,
                        double t_lo = 0.01, double t_hi = 10, int points = 30) {
  const auto fit = log_grid(t_lo, t_hi, points);
  std::vector<double> held;
  for (int i = 0; i + 1 < points; ++i) held.push_back(std::sqrt(fit[std::size_t(i)] * fit[std::size_t(i + 1)]));
  NashRun r;
  for (int s = 0; s < seeds; ++s) {
    const auto env = Environment::generate(hash_combine(seed0, std::uint64_t(s)), law,
                                           LatticeWindow::centered(N, A, Boundary::frozen_buffer), eps);
    r.fit.push_back(walk_kernel(env, fit));
    r.heldout.push_back(walk_kernel(env, held));
  }
  r.report = nash_report(r.fit, r.heldout, eps);
  return r;
}

inline Report run_nash(const ExperimentConfig& c, const OutputDir& out) {
  Report r = start_report(c, c.N, c.env_seeds, c.resolved_env_seed());
  const auto n = nash_run(c.env_seeds, r.env_seed, c.law, c.epsilon, c.N, c.half_width > 0 ? c.half_width : 10, 0.01, c.horizon);
  const auto& q = n.report;
  r.extra = {{"exponent", q.exponent}, {"constant", q.constant}, {"residual", q.residual}, {"C0", q.C0},
             {"fit_max", q.fit_max},   {"heldout_max", q.heldout_max}, {"monotone", q.monotone}};
  r.checks.push_back({"held-out sup p_t(x,x) sqrt t <= C0", q.heldout_max, 0, q.C0, 0, 0, q.heldout_max <= q.C0, {}});
  r.checks.push_back({"C0 <= 2/eps", q.C0, 0, q.bound, 0, 0, q.C0 <= q.bound, {}});
  r.checks.push_back({"p_t(x,x) non-increasing in t", double(q.monotone), 0, 1, 0, 0, q.monotone, {}});
  auto f = out.csv("nash.csv");
  f << "seed_index,t,sup_diag_sqrt_t,heldout\n";
  for (std::size_t s = 0; s < n.fit.size(); ++s) {
    for (std::size_t i = 0; i < n.fit[s].times.size(); ++i)
      f << s << ',' << n.fit[s].times[i] << ',' << n.fit[s].sup_diag_sqrt_t[i] << ",0\n";
    for (std::size_t i = 0; i < n.heldout[s].times.size(); ++i)
      f << s << ',' << n.heldout[s].times[i] << ',' << n.heldout[s].sup_diag_sqrt_t[i] << ",1\n";
  }
  return r;
}

/// K-site segment [-K/2, K/2 - 1] with scaling parameter K/2.
inline Environment small_segment(std::uint64_t seed, const DisorderLaw& law, int K, double eps = 0.25) {
  require(K >= 4 && K % 2 == 0, "oracle", "segment length must be even and at least 4");
  return Environment::generate(seed, law, LatticeWindow{K / 2, -K / 2, K / 2 - 1, Boundary::frozen_buffer}, eps);
}

inline Report run_liggett(const ExperimentConfig& c, const OutputDir& out) {
  Report r = start_report(c, c.N, 0, c.resolved_env_seed());
  const auto env = c.env_file.empty() ? small_segment(r.env_seed, c.law, c.K, c.epsilon) : load_environment(c.env_file);
  require(env.window().sites() == c.K, "cli", "environment file does not have K sites");
  std::vector<double> grid = {0.0};
  for (double t : c.sample_times) if (t > 0) grid.push_back(t);
  std::vector<std::pair<std::string, std::vector<double>>> fs = {{"nearest-neighbour", nearest_neighbour_function(c.K)}};
  for (int i = 0; i < c.random_functions; ++i)
    fs.push_back({"random-" + std::to_string(i + 1), random_definite_function(c.K, hash_combine(r.env_seed, std::uint64_t(100 + i)))});
  auto f = out.csv("liggett.csv");
  f << "function,t,min_margin\n";
  for (const auto& [name, fn] : fs) {
    const auto L = liggett_check(env, fn, grid, 1e-10);
    for (std::size_t k = 0; k < L.times.size(); ++k) {
      double m = std::numeric_limits<double>::infinity();
      for (int i = 0; i < c.K * c.K; ++i)
        if (i / c.K != i % c.K) m = std::min(m, L.independent[k][std::size_t(i)] - L.exclusion[k][std::size_t(i)]);
      f << name << ',' << L.times[k] << ',' << m << '\n';
    }
    r.checks.push_back({"S2 f <= S2^0 f + 1e-10 for " + name, L.min_margin, 0, 0, 0, 1e-10, L.pass,
                        "min eigenvalue on mean-zero vectors " + std::to_string(L.min_eigenvalue)});
  }
  return r;
}

inline Report run_hitting(const ExperimentConfig& c, const OutputDir& out) {
  Report r = start_report(c, c.N, c.replicas, c.resolved_env_seed());
  const auto env = config_environment(c, LatticeWindow::centered(c.N, c.half_width > 0 ? c.half_width : 25, c.boundary));
  const auto grid = log_grid(0.1, c.horizon, 16);
  const auto h = hitting_and_coalescence(env, c.a, c.b, grid, c.replicas, c.replica_seed(), c.threads);
  r.checks.push_back(within("P(tau_a < tau_b)", h.mc, h.mc_se, h.exact, 3));
  r.checks.push_back({"P(tau* > t) sqrt(1+t) bounded", h.late_max, h.late_max_se, h.early_max, 0, 3 * h.late_max_se,
                      h.coalescence_pass, "late log-log slope " + std::to_string(h.late_slope)});
  r.warnings = h.warnings;
  r.extra = {{"envelope", h.envelope}, {"late_slope", h.late_slope}, {"escaped", h.escaped}};
  auto f = out.csv("hitting.csv");
  f << "t,hit_tail,hit_tail_se,coal_tail,coal_tail_se,coal_scaled\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    f << grid[i] << ',' << h.hit_tail[i] << ',' << h.hit_tail_se[i] << ',' << h.coal_tail[i] << ','
      << h.coal_tail_se[i] << ',' << h.coal_scaled[i] << '\n';
  return r;
}

/// Runs the experiment, writes report.json and its CSV tables under output_dir.
inline Report run_experiment(const ExperimentConfig& c) {
  const OutputDir out(c.output_dir);
  Report r;
  if (c.experiment == "hydro") r = run_hydro(c, out);
  else if (c.experiment == "density-clt") r = run_density_clt(c, out);
  else if (c.experiment == "current-clt") r = run_current_clt(c, out);
  else if (c.experiment == "tagged-clt") r = run_tagged_clt(c, out);
  else if (c.experiment == "correlations") r = run_correlations(c, out);
  else if (c.experiment == "nash") r = run_nash(c, out);
  else if (c.experiment == "liggett") r = run_liggett(c, out);
  else if (c.experiment == "hitting") r = run_hitting(c, out);
  else throw Error("cli", "unknown experiment '" + c.experiment + "'");
  std::ofstream f(out.path("report.json"));
  require(bool(f), "cli", "cannot write " + out.path("report.json"));
  f << std::setw(2) << report_to_json(r) << '\n';
  return r;
}

}  // namespace rcsep
