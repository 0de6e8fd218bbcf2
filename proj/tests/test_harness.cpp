/*
 * Copyright 2026 The vacbo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "vacbo/harness.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

namespace {

namespace h = vacbo::harness;
namespace fs = std::filesystem;
using vacbo::budget::kInf;

const std::string kCli = VACBO_CLI_PATH;
const fs::path kSource = VACBO_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("vacbo_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + kCli + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

const char* kSmall = R"({
  "problem": "trap-2d",
  "horizon": 6,
  "budget": 10,
  "budget_max": 4,
  "schedule": {"a": 0.5, "b": 0.5},
  "grid_resolution": 11,
  "seed": 3
})";

// ---------------------------------------------------------------- config parsing

TEST(Config, DefaultsFilled) {
  const h::RunConfig c = h::parse_config(R"({"problem": "gp-prior-sample"})");
  EXPECT_EQ(c.mode, vacbo::opt::Mode::vacbo);
  EXPECT_EQ(c.horizon, 30u);
  EXPECT_EQ(c.budget, std::vector<double>{0.0});
  EXPECT_EQ(c.budget_max, std::vector<double>{kInf});
  ASSERT_EQ(c.schedule.size(), 1u);
  EXPECT_EQ(c.schedule[0].a, 0.0);
  EXPECT_EQ(c.schedule[0].b, 1.0);
  EXPECT_EQ(c.epsilon, 0.01);
  EXPECT_EQ(c.context.kind, "default");
}

TEST(Config, EchoRoundTrips) {
  for (const char* name : {"trap.json", "vcs.json", "gp_prior.json", "vcs_trace.json"}) {
    const h::RunConfig c = h::load_config((kSource / "configs" / name).string());
    const std::string echo = h::config_json(c).dump(2);
    h::RunConfig back = h::parse_config(echo);
    back.source_path = c.source_path;
    EXPECT_EQ(h::config_json(back).dump(2), echo) << name;
    EXPECT_TRUE(back.context == c.context) << name;
  }
}

TEST(Config, InfBudgetSurvivesEcho) {
  const h::RunConfig c = h::parse_config(R"({"problem": "trap-2d", "budget": "inf", "budget_max": ["inf"]})");
  EXPECT_EQ(c.budget[0], kInf);
  const auto j = h::config_json(c);
  EXPECT_EQ(j["budget"][0], "inf");
  EXPECT_EQ(h::parse_config(j.dump()).budget_max[0], kInf);
}

TEST(Config, ErrorsCarryLocation) {
  try {
    h::parse_config("{\n  \"problem\": \"trap-2d\",\n  \"horizon\": -4\n}", "x.json");
    FAIL();
  } catch (const vacbo::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.json:3"), std::string::npos) << e.what();
  }
  try {
    h::parse_config("{\n  \"problem\": \"trap-2d\",,\n}", "y.json");
    FAIL();
  } catch (const vacbo::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("y.json:2"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsBadInputs) {
  EXPECT_THROW(h::parse_config(R"({"problem": "trap-2d", "horizn": 4})"), vacbo::ConfigError);
  EXPECT_THROW(h::parse_config(R"({"problem": "nope"})"), vacbo::ConfigError);
  EXPECT_THROW(h::parse_config(R"({"problem": "trap-2d", "mode": "safeopt"})"), vacbo::ConfigError);
  EXPECT_THROW(h::parse_config(R"({"problem": "trap-2d", "budget": -1})"), vacbo::ConfigError);
  EXPECT_THROW(h::parse_config(R"({"problem": "trap-2d", "epsilon": 1.5})"), vacbo::ConfigError);
  EXPECT_THROW(h::parse_config(R"({"problem": "trap-2d", "budget": [1, 2]})"), vacbo::ConfigError);
  EXPECT_THROW(h::parse_config(R"({"problem": "trap-2d", "schedule": {"a": 0.8, "b": 0.5}})"),
               vacbo::ConfigError);
  EXPECT_THROW(h::parse_config("[]"), vacbo::ConfigError);
}

TEST(Config, OverridesApplyInOrder) {
  h::RunConfig c = h::parse_config(R"({"problem": "trap-2d", "budget": 2, "seed": 5})");
  h::Overrides o;
  o.seed = 9;
  o.budget = h::parse_budget_list("inf");
  o.mode = vacbo::opt::Mode::safe_style;
  h::apply_overrides(c, o);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.budget[0], kInf);
  EXPECT_EQ(c.mode, vacbo::opt::Mode::safe_style);
  o.budget = std::vector<double>{1.0, 2.0};
  EXPECT_THROW(h::apply_overrides(c, o), vacbo::ConfigError);
  EXPECT_THROW(h::parse_budget_list("1,-2"), vacbo::ConfigError);
  EXPECT_THROW(h::parse_seed("-3", "--seed"), vacbo::ConfigError);
}

TEST(Config, RelativeTracePathResolvesBesideConfig) {
  const h::RunConfig c = h::load_config((kSource / "configs" / "vcs_trace.json").string());
  EXPECT_EQ(fs::path(h::resolve_path(c, c.context.path)), kSource / "configs" / c.context.path);
}

// ---------------------------------------------------------------- outputs

TEST(Trace, HeaderIsStable) {
  const auto cols = h::trace_columns(2, 3, 1);
  const std::vector<std::string> want{"t",         "z1", "z2",    "theta1",  "theta2", "theta3",
                                      "objective", "g1", "cost1", "budget1", "fallback"};
  EXPECT_EQ(cols, want);
}

TEST(Trace, MatchesGoldenFile) {
  const h::RunConfig c = h::load_config((kSource / "tests/golden/trap_seed7.json").string());
  const h::RunOutput o = h::execute(c);
  EXPECT_EQ(h::trace_csv(o.result, 1, 2), slurp(kSource / "tests/golden/trap_seed7_trace.csv"));
}

TEST(Trace, SummaryRecomputesFromTrace) {
  for (const char* mode : {"vacbo", "cbo_generic", "safe_style"}) {
    h::RunConfig c = h::load_config((kSource / "configs/trap.json").string());
    c.horizon = 15;
    c.grid_resolution = 21;
    c.mode = vacbo::opt::parse_mode(mode);
    const fs::path dir = scratch(std::string("summary_") + mode);
    h::write_run(h::execute(c), dir);
    const auto rows = read_csv(slurp(dir / "trace.csv"));
    const auto summary = h::json::parse(slurp(dir / "summary.json"));
    ASSERT_EQ(rows.size(), 16u);
    double sum = 0.0, max_v = 0.0, max_c = 0.0, cum = 0.0;
    std::size_t fallback = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      sum += std::stod(rows[r][4]);
      max_v = std::max(max_v, std::max(std::stod(rows[r][5]), 0.0));
      max_c = std::max(max_c, std::stod(rows[r][6]));
      cum += std::stod(rows[r][6]);
      fallback += rows[r][8] == "1";
    }
    const auto& m = summary["metrics"];
    EXPECT_EQ(m["mean_objective"].get<double>(), sum / 15.0) << mode;
    EXPECT_EQ(m["max_violation"][0].get<double>(), max_v);
    EXPECT_EQ(m["max_step_cost"][0].get<double>(), max_c);
    EXPECT_EQ(m["cumulative_cost"][0].get<double>(), cum);
    EXPECT_EQ(m["fallback_count"].get<std::size_t>(), fallback);
    const auto& eff = summary["effective_budget"];
    const double B = eff["budget"][0].is_string() ? kInf : eff["budget"][0].get<double>();
    const double cap = eff["budget_max"][0].is_string() ? kInf : eff["budget_max"][0].get<double>();
    EXPECT_EQ(m["coverage_holds"].get<bool>(), max_c <= cap && cum <= B);
  }
}

TEST(Trace, ZeroHorizonWritesHeaderOnly) {
  h::RunConfig c = h::parse_config(kSmall);
  c.horizon = 0;
  const fs::path dir = scratch("zero");
  h::write_run(h::execute(c), dir);
  EXPECT_EQ(slurp(dir / "trace.csv"), "t,z1,theta1,theta2,objective,g1,cost1,budget1,fallback\n");
  const auto s = h::json::parse(slurp(dir / "summary.json"));
  EXPECT_FALSE(s["metrics"]["defined"].get<bool>());
  EXPECT_TRUE(s["metrics"]["mean_objective"].is_null());
}

// ---------------------------------------------------------------- sweep

TEST(Sweep, DuplicateSeedsRejected) {
  EXPECT_THROW(h::check_unique_seeds({1, 2, 1}), vacbo::ConfigError);
  EXPECT_THROW(h::check_unique_seeds({}), vacbo::ConfigError);
}

TEST(Sweep, SingleSeedIsDegenerate) {
  const h::SweepResult s = h::sweep(h::parse_config(kSmall), {4});
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.runs.size(), 1u);
  EXPECT_TRUE(h::sweep_json(s)["coverage"]["degenerate"].get<bool>());
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  const h::RunConfig c = h::parse_config(kSmall);
  const std::vector<std::uint64_t> seeds{5, 1, 9, 2, 7, 3};
  const auto a = h::sweep(c, seeds, 1), b = h::sweep(c, seeds, 4);
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    EXPECT_EQ(a.runs[k].config.seed, seeds[k]);
    EXPECT_EQ(h::trace_csv(a.runs[k].result, 1, 2), h::trace_csv(b.runs[k].result, 1, 2));
  }
  EXPECT_EQ(a.successes, b.successes);
}

TEST(Sweep, WilsonInterval) {
  const h::Interval i = h::wilson_interval(187, 200);
  EXPECT_NEAR(i.lo, 0.8919809207009312, 1e-12);
  EXPECT_NEAR(i.hi, 0.961623645350847, 1e-12);
  const h::Interval all = h::wilson_interval(10, 10);
  EXPECT_NEAR(all.hi, 1.0, 1e-12);
  EXPECT_NEAR(all.lo, 0.7224672001371107, 1e-12);
  const h::Interval none = h::wilson_interval(0, 0);
  EXPECT_EQ(none.lo, 0.0);
  EXPECT_EQ(none.hi, 1.0);
}

// ---------------------------------------------------------------- compare

TEST(Compare, ContextsAlignedAndLabelled) {
  h::RunConfig a = h::parse_config(kSmall), b = a, c = a;
  b.mode = vacbo::opt::Mode::safe_style;
  c.seed = 99;
  const h::CompareResult r = h::compare({a, b, c});
  EXPECT_EQ(r.labels, (std::vector<std::string>{"vacbo", "safe_style", "vacbo_2"}));
  for (std::size_t t = 0; t < a.horizon; ++t) {
    EXPECT_EQ(r.runs[1].result.steps[t].context, r.runs[0].result.steps[t].context);
  }
  EXPECT_EQ(h::trace_csv(r.runs[2].result, 1, 2), h::trace_csv(r.runs[0].result, 1, 2));
  const auto rows = read_csv(r.csv);
  EXPECT_EQ(rows.size(), a.horizon + 1);
  EXPECT_EQ(rows[0][2], "vacbo.objective");
  EXPECT_EQ(read_csv(r.summary_csv).size(), 4u);
}

TEST(Compare, MismatchRejected) {
  h::RunConfig a = h::parse_config(kSmall), b = a;
  b.problem = "gp-prior-sample";
  EXPECT_THROW(h::compare({a, b}), vacbo::ConfigError);
  b = a;
  b.horizon = 7;
  EXPECT_THROW(h::compare({a, b}), vacbo::ConfigError);
  EXPECT_THROW(h::compare({a}), vacbo::ConfigError);
}

// ---------------------------------------------------------------- CLI

TEST(Cli, RunIsByteIdenticalAcrossInvocations) {
  const fs::path d = scratch("rerun");
  spit(d / "c.json", kSmall);
  ASSERT_EQ(cli("run --config " + (d / "c.json").string() + " --out " + (d / "a").string()), 0);
  ASSERT_EQ(cli("run --config " + (d / "c.json").string() + " --out " + (d / "b").string()), 0);
  EXPECT_EQ(slurp(d / "a/trace.csv"), slurp(d / "b/trace.csv"));
  EXPECT_FALSE(slurp(d / "a/trace.csv").empty());
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch("exit");
  spit(d / "bad.json", "{ \"problem\": ");
  spit(d / "c.json", kSmall);
  spit(d / "trace.json", R"({"problem": "vcs-surrogate", "horizon": 3,
    "context": {"kind": "trace", "path": "missing.csv"}})");
  EXPECT_EQ(cli("run --config " + (d / "nope.json").string()), h::kExitConfig);
  EXPECT_EQ(cli("run --config " + (d / "bad.json").string()), h::kExitConfig);
  EXPECT_EQ(cli("run --config " + (d / "trace.json").string() + " --out " + d.string()), h::kExitConfig);
  EXPECT_EQ(cli("run --config " + (d / "c.json").string() + " --mode bogus"), h::kExitConfig);
  EXPECT_EQ(cli("run --config " + (d / "c.json").string() + " --budget -1"), h::kExitConfig);
  EXPECT_EQ(cli("run"), h::kExitConfig);
  EXPECT_EQ(cli("sweep --config " + (d / "c.json").string() + " --seeds 1,2,1 --out " + d.string()),
            h::kExitConfig);
}

TEST(Cli, EnvironmentAndFlagPrecedence) {
  const fs::path d = scratch("env");
  spit(d / "c.json", kSmall);
  const std::string cfg = " --config " + (d / "c.json").string();
  ASSERT_EQ(cli("run" + cfg, "VACBO_SEED=11 VACBO_OUT=" + (d / "env").string()), 0);
  ASSERT_EQ(cli("run" + cfg + " --seed 12 --out " + (d / "flag").string(),
                "VACBO_SEED=11 VACBO_OUT=" + (d / "env2").string()),
            0);
  EXPECT_FALSE(fs::exists(d / "env2"));
  EXPECT_EQ(h::json::parse(slurp(d / "env/summary.json"))["config"]["seed"], 11);
  EXPECT_EQ(h::json::parse(slurp(d / "flag/summary.json"))["config"]["seed"], 12);
}

TEST(Cli, GenericModeReportsInfiniteBudget) {
  const fs::path d = scratch("generic");
  spit(d / "c.json", kSmall);
  ASSERT_EQ(cli("run --config " + (d / "c.json").string() + " --mode cbo_generic --out " + d.string()), 0);
  const auto s = h::json::parse(slurp(d / "summary.json"));
  EXPECT_EQ(s["effective_budget"]["budget"][0], "inf");
  EXPECT_EQ(s["effective_budget"]["budget_max"][0], "inf");
  EXPECT_EQ(s["config"]["budget"][0], 10);
}

TEST(Cli, SweepAndCompareWriteOutputs) {
  const fs::path d = scratch("multi");
  spit(d / "c.json", kSmall);
  std::string safe = kSmall;
  safe.insert(1, "\"mode\": \"safe_style\", \"label\": \"safe\",");
  spit(d / "s.json", safe);
  ASSERT_EQ(cli("sweep --config " + (d / "c.json").string() + " --count 3 --threads 2 --out " +
                (d / "sw").string()),
            0);
  const auto sj = h::json::parse(slurp(d / "sw/sweep.json"));
  EXPECT_EQ(sj["seeds"], (std::vector<int>{3, 4, 5}));
  EXPECT_TRUE(fs::exists(d / "sw/runs/seed_4/trace.csv"));
  ASSERT_EQ(cli("compare --config " + (d / "c.json").string() + " " + (d / "s.json").string() +
                " --out " + (d / "cmp").string()),
            0);
  const auto rows = read_csv(slurp(d / "cmp/compare.csv"));
  EXPECT_EQ(rows.size(), 7u);
  EXPECT_NE(std::find(rows[0].begin(), rows[0].end(), "safe.objective"), rows[0].end());
}

}  // namespace
