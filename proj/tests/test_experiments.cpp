#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rcsep/experiments.hpp"
#include "rcsep/verify.hpp"

using namespace rcsep;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rcsep-test-" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, DefaultsParseForEveryExperiment) {
  for (const auto& id : experiment_ids()) {
    const auto c = parse_config({{"experiment", id}});
    EXPECT_EQ(c.experiment, id);
    EXPECT_GE(c.N, 16);
    EXPECT_EQ(c.resolved.at("env_seed").get<std::uint64_t>(), c.resolved_env_seed());
  }
  EXPECT_THROW(default_config("nonsense"), Error);
  EXPECT_THROW(parse_config({{"experiment", "nonsense"}}), Error);
}

TEST(Config, UserValuesOverrideDefaults) {
  const auto c = parse_config(json::parse(R"({"experiment": "hydro", "N": 64, "law": "two-point:0.5:2:0.3",
                                             "env_seed": 9, "cutoff": "quarter-power", "boundary": "periodic"})"));
  EXPECT_EQ(c.N, 64);
  EXPECT_EQ(c.resolved_env_seed(), 9u);
  EXPECT_EQ(c.cutoff.kind, Cutoff::quarter_power);
  EXPECT_EQ(c.boundary, Boundary::periodic);
  EXPECT_DOUBLE_EQ(c.law.mean_inverse(), 0.3 / 0.5 + 0.7 / 2);
}

TEST(Config, RejectsInvalidInput) {
  EXPECT_THROW(parse_config({{"experiment", "hydro"}, {"N", 8}}), Error);
  EXPECT_THROW(parse_config({{"experiment", "hydro"}, {"horizon", 0}}), Error);
  EXPECT_THROW(parse_config({{"experiment", "hydro"}, {"sample_times", {0.1, 0.9}}}), Error);
  EXPECT_THROW(parse_config({{"experiment", "hydro"}, {"replicas", 1}}), Error);
  EXPECT_THROW(parse_config({{"experiment", "hydro"}, {"N", "many"}}), Error);
  EXPECT_THROW(parse_config({{"N", 32}}), Error);
  EXPECT_THROW(parse_config(json::array()), Error);
}

TEST(Config, SeedsDependOnExperiment) {
  const auto a = parse_config({{"experiment", "hydro"}}), b = parse_config({{"experiment", "density-clt"}});
  EXPECT_NE(a.resolved_env_seed(), b.resolved_env_seed());
  EXPECT_NE(a.replica_seed(), b.replica_seed());
  EXPECT_EQ(a.replica_seed(), parse_config({{"experiment", "hydro"}}).replica_seed());
}

TEST(Law, Descriptors) {
  EXPECT_DOUBLE_EQ(parse_law("constant:2").mean_inverse(), 0.5);
  EXPECT_NEAR(parse_law("uniform:0.5:2").mean_inverse(), std::log(4.0) / 1.5, 1e-14);
  EXPECT_THROW(parse_law("uniform:0.5"), Error);
  EXPECT_THROW(parse_law("gamma:1:2"), Error);
  EXPECT_THROW(parse_law(""), Error);
}

TEST(Report, JsonRoundTripAndRendering) {
  Report r;
  r.experiment = "hydro";
  r.N = 32;
  r.M = 10;
  r.env_seed = 4;
  r.checks.push_back(within("first", 1.0, 0.1, 1.05, 3));
  r.checks.push_back(within("second", 1.0, 0.01, 2.0, 3));
  r.warnings.push_back("careful");
  const auto j = json::parse(report_to_json(r).dump());
  EXPECT_FALSE(j.at("pass").get<bool>());
  EXPECT_DOUBLE_EQ(j.at("mc").get<double>(), 1.0);
  const auto checks = j.at("checks").get<std::vector<Check>>();
  ASSERT_EQ(checks.size(), 2u);
  EXPECT_TRUE(checks[0].pass);
  EXPECT_FALSE(checks[1].pass);
  const auto text = render_report(j);
  EXPECT_NE(text.find("overall: FAIL"), std::string::npos);
  EXPECT_NE(text.find("warning: careful"), std::string::npos);
  EXPECT_THROW(Report{}.headline(), Error);
  EXPECT_FALSE(Report{}.pass());
}

TEST(Run, SmallHydroWritesReport) {
  const auto dir = scratch("hydro");
  auto j = default_config("hydro");
  j["N"] = 32;
  j["replicas"] = 40;
  j["horizon"] = 0.1;
  j["sample_times"] = {0.0, 0.1};
  j["output_dir"] = dir.string();
  const auto r = run_experiment(parse_config(j));
  EXPECT_EQ(r.experiment, "hydro");
  EXPECT_FALSE(r.checks.empty());
  std::ifstream f(dir / "report.json");
  ASSERT_TRUE(f.good());
  const auto doc = json::parse(f);
  EXPECT_EQ(doc.at("N").get<int>(), 32);
  EXPECT_TRUE(fs::exists(dir / "hydro.csv"));
  fs::remove_all(dir);
}

TEST(Run, LiggettIsDeterministic) {
  const auto dir = scratch("liggett");
  auto j = default_config("liggett");
  j["output_dir"] = dir.string();
  j["random_functions"] = 2;
  const auto r = run_experiment(parse_config(j));
  ASSERT_EQ(r.checks.size(), 3u);
  EXPECT_TRUE(r.pass());
  const auto again = run_experiment(parse_config(j));
  EXPECT_EQ(again.checks[1].mc, r.checks[1].mc);
  fs::remove_all(dir);
}

TEST(Verify, TableAndLevels) {
  const auto& t = criteria_table();
  for (int i = 1; i <= 15; ++i)
    EXPECT_TRUE(std::any_of(t.begin(), t.end(), [&](const CriterionEntry& e) { return e.id == std::to_string(i); })) << i;
  std::ostringstream os;
  EXPECT_THROW(verify("medium", os), Error);
}

TEST(Verify, FailuresAreReportedNotThrown) {
  const CriterionEntry broken{"X", [] () -> CriterionResult { throw Error("stats", "boom"); }, true};
  const auto r = run_criterion(broken);
  EXPECT_FALSE(r.pass);
  EXPECT_NE(r.detail.find("boom"), std::string::npos);
  EXPECT_NE(format_result(r).find("FAIL"), std::string::npos);
}
