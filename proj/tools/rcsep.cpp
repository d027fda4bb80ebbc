// Command-line front end: run experiments, verify the acceptance suite, inspect environments.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rcsep/experiments.hpp"
#include "rcsep/verify.hpp"

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  rcsep::require(bool(f), "cli", "cannot open " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw rcsep::Error("cli", "malformed JSON in " + path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exclusion process in a random environment: experiments and checks"};
  app.require_subcommand(1);

  std::string config_path, env_file, cutoff, output;
  long replicas = 0;
  double horizon = 0, sample_every = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
  run->add_option("config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--env-file", env_file, "load the environment from a JSON document");
  run->add_option("--replicas", replicas, "number of replicas M")->check(CLI::PositiveNumber);
  run->add_option("--horizon", horizon, "time horizon T")->check(CLI::PositiveNumber);
  run->add_option("--sample-every", sample_every, "sample every dt up to T")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "master seed");
  run->add_option("--threads", threads, "worker threads for replicas")->check(CLI::NonNegativeNumber);
  run->add_option("--cutoff", cutoff, "fixed:<l> or quarter-power");
  run->add_option("--output", output, "output directory");

  std::string level;
  auto* verify = app.add_subcommand("verify", "run the verification suite");
  verify->add_option("level", level, "fast or full")->required()->check(CLI::IsMember({"fast", "full"}));

  std::string law = "uniform:0.25:0.75", boundary = "frozen-buffer", env_in;
  int N = 16;
  double half_width = 2, epsilon = 0.25;
  std::uint64_t env_seed = 1;
  bool with_values = false;
  auto* env = app.add_subcommand("env", "generate or inspect an environment");
  env->add_option("--seed", env_seed, "environment seed");
  env->add_option("--law", law, "uniform:a:b, constant:c or two-point:a:b:p");
  env->add_option("--N", N, "scaling parameter")->check(CLI::PositiveNumber);
  env->add_option("--half-width", half_width, "macroscopic half-width of the window");
  env->add_option("--epsilon", epsilon, "ellipticity constant");
  env->add_option("--boundary", boundary, "frozen-buffer or periodic");
  env->add_option("--env-file", env_in, "inspect this environment document instead");
  env->add_flag("--values", with_values, "include the conductances");

  std::string report_path;
  auto* report = app.add_subcommand("report", "render a JSON report as text");
  report->add_option("file", report_path, "report.json")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      nlohmann::json j = read_json(config_path);
      if (!env_file.empty()) j["env_file"] = env_file;
      if (replicas) j["replicas"] = replicas;
      if (horizon > 0) j["horizon"] = horizon;
      if (run->count("--seed")) j["master_seed"] = seed;
      if (run->count("--threads")) j["threads"] = threads;
      if (!cutoff.empty()) j["cutoff"] = cutoff;
      if (!output.empty()) j["output_dir"] = output;
      if (sample_every > 0) {
        const double T = j.value("horizon", rcsep::default_config(j.value("experiment", std::string("hydro")))["horizon"].get<double>());
        std::vector<double> times;
        for (long k = 0; k * sample_every <= T * (1 + 1e-12); ++k) times.push_back(std::min(T, k * sample_every));
        j["sample_times"] = times;
      }
      const auto cfg = rcsep::parse_config(j);
      const auto r = rcsep::run_experiment(cfg);
      std::cout << rcsep::render_report(rcsep::report_to_json(r));
      std::cout << "report written to " << cfg.output_dir << "/report.json\n";
      return r.pass() ? 0 : 1;
    }
    if (*verify) {
      const auto results = rcsep::verify(level, std::cout);
      for (const auto& r : results)
        if (!r.pass) return 1;
      return 0;
    }
    if (*env) {
      rcsep::Environment e;
      if (!env_in.empty()) {
        e = rcsep::load_environment(env_in);
      } else {
        const auto w = rcsep::LatticeWindow::centered(N, half_width, rcsep::boundary_from_string(boundary));
        e = rcsep::Environment::generate(env_seed, rcsep::parse_law(law), w, epsilon);
      }
      auto j = rcsep::environment_to_json(e, with_values);
      j["gamma_law"] = e.gamma_law();
      std::vector<long> blocks;
      for (long K = 1; K <= std::min(e.window().x_max, -e.window().x_min + 1); K *= 4) blocks.push_back(K);
      nlohmann::json avg = nlohmann::json::array();
      for (const auto& b : rcsep::gamma_convergence_report(e, blocks))
        avg.push_back({{"K", b.K}, {"right", b.right}, {"left", b.left}});
      j["block_averages"] = avg;
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*report) {
      std::cout << rcsep::render_report(read_json(report_path));
      return 0;
    }
  } catch (const rcsep::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
