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

#pragma once

#include "vacbo/optimizer.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace vacbo::harness {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPlant = 3;

/// Shortest decimal string that reads back to the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  if (std::isnan(v)) return json(nullptr);
  return json(v);
}

/// How a run obtains its contexts. `default` defers to the problem.
struct ContextSpec {
  std::string kind = "default";
  std::vector<std::vector<double>> base;
  std::vector<double> noise_std;
  std::size_t period = 0;
  std::vector<double> value;
  std::string path;
  std::vector<std::string> columns{"temp", "humidity"};

  bool operator==(const ContextSpec&) const = default;
};

struct RunConfig {
  std::string problem;
  opt::Mode mode = opt::Mode::vacbo;
  std::size_t horizon = 30;
  std::vector<double> budget;
  std::vector<double> budget_max;
  std::vector<budget::Schedule> schedule;
  double epsilon = 0.01;
  int grid_resolution = 25;
  std::uint64_t seed = 0;
  bool refine = false;
  double plant_noise_std = 0.0;
  ContextSpec context;
  std::string out = "out";
  std::string label;
  /// Where the config was read from; relative trace paths resolve against it.
  std::string source_path;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<opt::Mode> mode;
  std::optional<std::vector<double>> budget;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < std::min(offset, text.size()); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

/// Resolves config keys to source lines for diagnostics.
class Locator {
 public:
  Locator(std::string path, std::string text) : path_(std::move(path)), text_(std::move(text)) {}

  std::string where(const std::string& key) const {
    const std::size_t pos = text_.find("\"" + key + "\"");
    if (pos == std::string::npos) return path_;
    return path_ + ":" + std::to_string(line_col(text_, pos).first);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(where(key) + ": " + msg);
  }

 private:
  std::string path_;
  std::string text_;
};

inline double budget_value(const json& v, const Locator& loc, const std::string& key) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "Infinity" || s == "+inf") return budget::kInf;
    loc.fail(key, "expected a number or \"inf\", got \"" + s + "\"");
  }
  if (!v.is_number()) loc.fail(key, "expected a number or \"inf\"");
  const double d = v.get<double>();
  if (!(d >= 0.0)) loc.fail(key, "must be >= 0");
  return d;
}

inline std::vector<double> budget_list(const json& v, std::size_t n, const Locator& loc,
                                       const std::string& key) {
  std::vector<double> out;
  if (v.is_array()) {
    for (const json& e : v) out.push_back(budget_value(e, loc, key));
    if (out.size() != n) {
      loc.fail(key, "needs " + std::to_string(n) + " entries (one per constraint), got " +
                        std::to_string(out.size()));
    }
  } else {
    out.assign(n, budget_value(v, loc, key));
  }
  return out;
}

inline budget::Schedule schedule_value(const json& v, const Locator& loc) {
  if (!v.is_object()) loc.fail("schedule", "each schedule must be an object");
  for (const auto& [k, _] : v.items()) {
    if (k != "a" && k != "b" && k != "table") loc.fail("schedule", "unknown schedule key '" + k + "'");
  }
  if (v.contains("table")) {
    if (!v["table"].is_array()) loc.fail("schedule", "table must be an array of numbers");
    std::vector<double> t;
    for (const json& e : v["table"]) {
      if (!e.is_number()) loc.fail("schedule", "table must be an array of numbers");
      t.push_back(e.get<double>());
    }
    return budget::Schedule::custom(std::move(t));
  }
  if (!v.contains("a") || !v.contains("b") || !v["a"].is_number() || !v["b"].is_number()) {
    loc.fail("schedule", "affine schedule needs numeric 'a' and 'b'");
  }
  return budget::Schedule::affine(v["a"].get<double>(), v["b"].get<double>());
}

inline std::vector<double> number_list(const json& v, const Locator& loc, const std::string& key) {
  if (!v.is_array()) loc.fail(key, "expected an array of numbers");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) loc.fail(key, "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline ContextSpec context_value(const json& v, const Locator& loc) {
  ContextSpec c;
  if (!v.is_object()) loc.fail("context", "context must be an object");
  static const std::set<std::string> keys{"kind", "base", "noise_std", "period", "value", "path", "columns"};
  for (const auto& [k, _] : v.items()) {
    if (!keys.count(k)) loc.fail(k, "unknown context key '" + k + "'");
  }
  if (v.contains("kind")) {
    if (!v["kind"].is_string()) loc.fail("kind", "context kind must be a string");
    c.kind = v["kind"].get<std::string>();
  }
  if (c.kind == "default") return c;
  if (c.kind == "constant") {
    if (!v.contains("value")) loc.fail("context", "constant context needs 'value'");
    c.value = number_list(v["value"], loc, "value");
  } else if (c.kind == "recurring") {
    if (!v.contains("base") || !v["base"].is_array() || v["base"].empty()) {
      loc.fail("context", "recurring context needs a non-empty 'base' list");
    }
    for (const json& row : v["base"]) c.base.push_back(number_list(row, loc, "base"));
    if (v.contains("noise_std")) {
      c.noise_std = number_list(v["noise_std"], loc, "noise_std");
    } else {
      c.noise_std.assign(c.base.front().size(), 0.0);
    }
    if (v.contains("period")) {
      if (!v["period"].is_number_unsigned()) loc.fail("period", "period must be a non-negative integer");
      c.period = v["period"].get<std::size_t>();
    }
  } else if (c.kind == "trace") {
    if (!v.contains("path") || !v["path"].is_string()) loc.fail("context", "trace context needs 'path'");
    c.path = v["path"].get<std::string>();
    if (v.contains("columns")) {
      c.columns.clear();
      if (!v["columns"].is_array()) loc.fail("columns", "columns must be an array of names");
      for (const json& e : v["columns"]) {
        if (!e.is_string()) loc.fail("columns", "columns must be an array of names");
        c.columns.push_back(e.get<std::string>());
      }
    }
  } else {
    loc.fail("kind", "unknown context kind '" + c.kind +
                         "' (expected default, constant, recurring or trace)");
  }
  return c;
}

}  // namespace detail

/// Parses and validates a run configuration from JSON text.
///
/// Budgets accept a number, the string "inf", or one entry per constraint.
/// Errors carry `path:line` (or `path:line:col` for syntax errors).
inline RunConfig parse_config(const std::string& text, const std::string& path = "<config>") {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string msg = e.what();
    const auto cut = msg.find(": ", msg.find("parse error"));
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": invalid JSON" + (cut == std::string::npos ? "" : msg.substr(cut)));
  }
  const detail::Locator loc(path, text);
  if (!j.is_object()) throw ConfigError(path + ":1: config must be a JSON object");

  static const std::set<std::string> keys{
      "problem", "mode", "horizon", "budget", "budget_max", "schedule", "epsilon",
      "grid_resolution", "seed", "refine", "plant_noise_std", "context", "out", "label"};
  for (const auto& [k, _] : j.items()) {
    if (!keys.count(k)) loc.fail(k, "unknown key '" + k + "'");
  }

  RunConfig c;
  c.source_path = path;
  if (!j.contains("problem") || !j["problem"].is_string()) {
    throw ConfigError(path + ": missing string key 'problem'");
  }
  c.problem = j["problem"].get<std::string>();
  const auto& names = plant::problem_names();
  if (std::find(names.begin(), names.end(), c.problem) == names.end()) {
    std::string known;
    for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
    loc.fail("problem", "unknown problem '" + c.problem + "' (known: " + known + ")");
  }
  const std::size_t n_con = plant::make_problem(c.problem).n_constraints();

  if (j.contains("mode")) {
    if (!j["mode"].is_string()) loc.fail("mode", "mode must be a string");
    try {
      c.mode = opt::parse_mode(j["mode"].get<std::string>());
    } catch (const ConfigError& e) {
      loc.fail("mode", e.what());
    }
  }
  if (j.contains("horizon")) {
    if (!j["horizon"].is_number_integer() || j["horizon"].get<long long>() < 1) {
      loc.fail("horizon", "horizon must be an integer >= 1");
    }
    c.horizon = j["horizon"].get<std::size_t>();
  }
  c.budget = j.contains("budget") ? detail::budget_list(j["budget"], n_con, loc, "budget")
                                  : std::vector<double>(n_con, 0.0);
  c.budget_max = j.contains("budget_max")
                     ? detail::budget_list(j["budget_max"], n_con, loc, "budget_max")
                     : std::vector<double>(n_con, budget::kInf);
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    if (s.is_array()) {
      for (const json& e : s) c.schedule.push_back(detail::schedule_value(e, loc));
      if (c.schedule.size() != n_con) {
        loc.fail("schedule", "needs " + std::to_string(n_con) + " entries (one per constraint)");
      }
    } else {
      c.schedule.assign(n_con, detail::schedule_value(s, loc));
    }
  } else {
    c.schedule.assign(n_con, budget::Schedule{});
  }
  for (const auto& s : c.schedule) {
    try {
      s.validate(c.horizon);
    } catch (const ConfigError& e) {
      loc.fail("schedule", e.what());
    }
  }
  if (j.contains("epsilon")) {
    if (!j["epsilon"].is_number()) loc.fail("epsilon", "epsilon must be a number");
    c.epsilon = j["epsilon"].get<double>();
  }
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) loc.fail("epsilon", "epsilon must lie in (0, 1)");
  if (j.contains("grid_resolution")) {
    if (!j["grid_resolution"].is_number_integer() || j["grid_resolution"].get<long long>() < 1) {
      loc.fail("grid_resolution", "grid_resolution must be an integer >= 1");
    }
    c.grid_resolution = j["grid_resolution"].get<int>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) loc.fail("seed", "seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("refine")) {
    if (!j["refine"].is_boolean()) loc.fail("refine", "refine must be true or false");
    c.refine = j["refine"].get<bool>();
  }
  if (j.contains("plant_noise_std")) {
    if (!j["plant_noise_std"].is_number() || !(j["plant_noise_std"].get<double>() >= 0.0)) {
      loc.fail("plant_noise_std", "plant_noise_std must be a number >= 0");
    }
    c.plant_noise_std = j["plant_noise_std"].get<double>();
  }
  if (j.contains("context")) c.context = detail::context_value(j["context"], loc);
  if (j.contains("out")) {
    if (!j["out"].is_string()) loc.fail("out", "out must be a string");
    c.out = j["out"].get<std::string>();
  }
  if (j.contains("label")) {
    if (!j["label"].is_string()) loc.fail("label", "label must be a string");
    c.label = j["label"].get<std::string>();
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

inline std::uint64_t parse_seed(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw ConfigError(what + ": '" + s + "' is not a non-negative integer");
  }
  return v;
}

/// VACBO_SEED and VACBO_OUT, applied before command-line overrides.
inline void apply_env(RunConfig& c) {
  if (const char* s = std::getenv("VACBO_SEED"); s && *s) c.seed = parse_seed(s, "VACBO_SEED");
  if (const char* o = std::getenv("VACBO_OUT"); o && *o) c.out = o;
}

inline void apply_overrides(RunConfig& c, const Overrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.mode) c.mode = *o.mode;
  if (o.budget) {
    if (o.budget->size() == 1) {
      std::fill(c.budget.begin(), c.budget.end(), o.budget->front());
    } else if (o.budget->size() == c.budget.size()) {
      c.budget = *o.budget;
    } else {
      throw ConfigError("--budget needs one value or one per constraint (" +
                        std::to_string(c.budget.size()) + ")");
    }
    for (double b : c.budget) {
      if (!(b >= 0.0)) throw ConfigError("--budget values must be >= 0");
    }
  }
}

/// Comma-separated budgets; "inf" allowed.
inline std::vector<double> parse_budget_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "inf" || item == "Infinity") {
      out.push_back(budget::kInf);
      continue;
    }
    double v = 0.0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || end != item.data() + item.size() || !(v >= 0.0)) {
      throw ConfigError("--budget: '" + item + "' is not a non-negative number or inf");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--budget: empty value");
  return out;
}

inline json schedule_json(const budget::Schedule& s) {
  if (s.is_custom()) return json{{"table", s.table}};
  return json{{"a", s.a}, {"b", s.b}};
}

inline json context_json(const ContextSpec& c) {
  json j;
  j["kind"] = c.kind;
  if (c.kind == "constant") j["value"] = c.value;
  if (c.kind == "recurring") {
    j["base"] = c.base;
    j["noise_std"] = c.noise_std;
    j["period"] = c.period;
  }
  if (c.kind == "trace") {
    j["path"] = c.path;
    j["columns"] = c.columns;
  }
  return j;
}

/// The config in its own file format; loading this back reproduces the run.
inline json config_json(const RunConfig& c) {
  json j;
  j["problem"] = c.problem;
  j["mode"] = opt::to_string(c.mode);
  j["horizon"] = c.horizon;
  j["budget"] = json::array();
  for (double b : c.budget) j["budget"].push_back(number_json(b));
  j["budget_max"] = json::array();
  for (double b : c.budget_max) j["budget_max"].push_back(number_json(b));
  j["schedule"] = json::array();
  for (const auto& s : c.schedule) j["schedule"].push_back(schedule_json(s));
  j["epsilon"] = c.epsilon;
  j["grid_resolution"] = c.grid_resolution;
  j["seed"] = c.seed;
  j["refine"] = c.refine;
  j["plant_noise_std"] = c.plant_noise_std;
  j["context"] = context_json(c.context);
  j["out"] = c.out;
  if (!c.label.empty()) j["label"] = c.label;
  return j;
}

inline plant::TuningProblem build_problem(const RunConfig& c) {
  return plant::make_problem(c.problem, {derive_seed(c.seed, opt::kPlantStream), c.plant_noise_std});
}

inline std::string resolve_path(const RunConfig& c, const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute() || c.source_path.empty() || c.source_path.front() == '<') return p;
  const fs::path beside = fs::path(c.source_path).parent_path() / path;
  return fs::exists(beside) || !fs::exists(path) ? beside.string() : p;
}

inline plant::ContextSource build_context(const RunConfig& c, const plant::TuningProblem& p) {
  const ContextSpec& s = c.context;
  auto vec = [](const std::vector<double>& v) {
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  plant::ContextSource src;
  if (s.kind == "default") {
    src = p.default_context;
  } else if (s.kind == "constant") {
    src = plant::ContextSource::constant(vec(s.value));
  } else if (s.kind == "recurring") {
    std::vector<Vector> base;
    for (const auto& b : s.base) base.push_back(vec(b));
    src = plant::ContextSource::recurring(std::move(base), vec(s.noise_std), s.period);
  } else if (s.kind == "trace") {
    src = plant::load_trace_csv(resolve_path(c, s.path), s.columns);
  } else {
    throw ConfigError("unknown context kind '" + s.kind + "'");
  }
  src.validate(p.n_z);
  return src;
}

inline opt::OptimizerConfig optimizer_config(const RunConfig& c) {
  opt::OptimizerConfig o;
  o.horizon = c.horizon;
  o.epsilon = c.epsilon;
  o.grid_resolution = c.grid_resolution;
  o.mode = c.mode;
  o.rng_seed = c.seed;
  o.multistart_refine = c.refine;
  o.budget = {c.budget, c.budget_max, c.schedule};
  return o;
}

struct RunOutput {
  RunConfig config;
  opt::RunResult result;
  double wall_clock_seconds = 0.0;
};

inline RunOutput execute(const RunConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  const plant::TuningProblem p = build_problem(c);
  const plant::ContextSource src = build_context(c, p);
  RunOutput out;
  out.config = c;
  out.result = opt::run(p, optimizer_config(c), src);
  out.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Column names of trace.csv for a problem with the given dimensions.
inline std::vector<std::string> trace_columns(std::size_t n_z, std::size_t n_theta, std::size_t n_con) {
  std::vector<std::string> cols{"t"};
  for (std::size_t k = 1; k <= n_z; ++k) cols.push_back("z" + std::to_string(k));
  for (std::size_t k = 1; k <= n_theta; ++k) cols.push_back("theta" + std::to_string(k));
  cols.push_back("objective");
  for (std::size_t k = 1; k <= n_con; ++k) cols.push_back("g" + std::to_string(k));
  for (std::size_t k = 1; k <= n_con; ++k) cols.push_back("cost" + std::to_string(k));
  for (std::size_t k = 1; k <= n_con; ++k) cols.push_back("budget" + std::to_string(k));
  cols.push_back("fallback");
  return cols;
}

inline std::string trace_csv(const opt::RunResult& r, std::size_t n_z, std::size_t n_theta) {
  const std::size_t n_con = r.effective_budget.total.size();
  std::string s;
  const auto cols = trace_columns(n_z, n_theta, n_con);
  for (std::size_t k = 0; k < cols.size(); ++k) s += (k ? "," : "") + cols[k];
  s += '\n';
  for (const auto& rec : r.steps) {
    s += std::to_string(rec.t);
    for (Eigen::Index k = 0; k < rec.context.size(); ++k) s += "," + format_number(rec.context[k]);
    for (Eigen::Index k = 0; k < rec.theta.size(); ++k) s += "," + format_number(rec.theta[k]);
    s += "," + format_number(rec.objective);
    for (Eigen::Index k = 0; k < rec.constraints.size(); ++k) s += "," + format_number(rec.constraints[k]);
    for (double c : rec.violation_costs) s += "," + format_number(c);
    for (double b : rec.step_budgets) s += "," + format_number(b);
    s += rec.fallback_used ? ",1\n" : ",0\n";
  }
  return s;
}

inline json summary_json(const RunOutput& o) {
  const opt::RunResult& r = o.result;
  const opt::RunSummary& m = r.summary;
  json j;
  j["config"] = config_json(o.config);
  json eff;
  eff["mode"] = opt::to_string(r.config.mode);
  eff["budget"] = json::array();
  eff["budget_max"] = json::array();
  for (double b : r.effective_budget.total) eff["budget"].push_back(number_json(b));
  for (double b : r.effective_budget.cap) eff["budget_max"].push_back(number_json(b));
  j["effective_budget"] = eff;
  json met;
  met["defined"] = m.defined;
  met["steps"] = m.steps;
  met["mean_objective"] = number_json(m.mean_objective);
  met["best_feasible_objective"] =
      m.best_feasible_objective ? json(*m.best_feasible_objective) : json(nullptr);
  met["max_violation"] = m.max_violation;
  met["max_step_cost"] = m.max_step_cost;
  met["cumulative_cost"] = m.cumulative_cost;
  met["coverage_holds"] = m.coverage_holds;
  met["implied_delta"] = m.implied_delta;
  met["fallback_count"] = m.fallback_count;
  j["metrics"] = met;
  j["warnings"] = r.warnings;
  j["safe_set_violated"] = r.safe_set_violated;
  j["wall_clock_seconds"] = o.wall_clock_seconds;
  return j;
}

/// Writes via a temporary sibling and rename so readers never see a partial file.
inline void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline void write_run(const RunOutput& o, const fs::path& dir) {
  const plant::TuningProblem p = plant::make_problem(o.config.problem);
  write_atomic(dir / "trace.csv", trace_csv(o.result, static_cast<std::size_t>(p.n_z),
                                            static_cast<std::size_t>(p.n_theta)));
  write_atomic(dir / "summary.json", summary_json(o).dump(2) + "\n");
}

/// Wilson score interval for a binomial proportion.
struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct SweepResult {
  RunConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<RunOutput> runs;
  std::size_t successes = 0;
  double fraction = 0.0;
  double target = 0.0;
  Interval interval;
  double half_width = 0.0;
  bool degenerate = false;
  bool meets_target = false;
};

inline void check_unique_seeds(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  std::set<std::uint64_t> seen;
  for (std::uint64_t s : seeds) {
    if (!seen.insert(s).second) {
      throw ConfigError("duplicate seed " + std::to_string(s) + " in sweep list");
    }
  }
}

/// Runs every seed (in parallel when threads > 1) and scores coverage:
/// a run counts when every per-step cost stays within B^max and the
/// cumulative cost within B for all constraints.
inline SweepResult sweep(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                         unsigned threads = 1, const std::optional<fs::path>& run_dir = std::nullopt) {
  check_unique_seeds(seeds);
  SweepResult s;
  s.config = base;
  s.seeds = seeds;
  s.runs.resize(seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < seeds.size(); k = next++) {
      try {
        RunConfig c = base;
        c.seed = seeds[k];
        s.runs[k] = execute(c);
        if (run_dir) write_run(s.runs[k], *run_dir / ("seed_" + std::to_string(seeds[k])));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = seeds.size();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(seeds.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& r : s.runs) s.successes += r.result.summary.coverage_holds ? 1 : 0;
  const std::size_t n = seeds.size();
  s.fraction = static_cast<double>(s.successes) / static_cast<double>(n);
  s.target = 1.0 - budget::implied_delta(base.epsilon, base.horizon);
  s.interval = wilson_interval(s.successes, n);
  s.half_width = 0.5 * (s.interval.hi - s.interval.lo);
  s.degenerate = n == 1;
  s.meets_target = s.fraction >= s.target - s.half_width;
  return s;
}

inline json sweep_json(const SweepResult& s) {
  json j;
  j["config"] = config_json(s.config);
  j["seeds"] = s.seeds;
  json runs = json::array();
  for (const auto& r : s.runs) {
    const auto& m = r.result.summary;
    json e;
    e["seed"] = r.config.seed;
    e["mean_objective"] = number_json(m.mean_objective);
    e["best_feasible_objective"] =
        m.best_feasible_objective ? json(*m.best_feasible_objective) : json(nullptr);
    e["max_violation"] = m.max_violation;
    e["max_step_cost"] = m.max_step_cost;
    e["cumulative_cost"] = m.cumulative_cost;
    e["coverage_holds"] = m.coverage_holds;
    e["fallback_count"] = m.fallback_count;
    runs.push_back(e);
  }
  j["runs"] = runs;
  json cov;
  cov["successes"] = s.successes;
  cov["n"] = s.seeds.size();
  cov["fraction"] = s.fraction;
  cov["target"] = s.target;
  cov["interval"] = {s.interval.lo, s.interval.hi};
  cov["half_width"] = s.half_width;
  cov["degenerate"] = s.degenerate;
  cov["meets_target"] = s.meets_target;
  j["coverage"] = cov;
  return j;
}

struct CompareResult {
  std::vector<RunOutput> runs;
  std::vector<std::string> labels;
  std::string csv;
  std::string summary_csv;
};

/// Runs each config under a common seed and aligns the traces step by step.
/// All configs must share problem, context source and horizon.
inline CompareResult compare(std::vector<RunConfig> configs, std::optional<std::uint64_t> seed = std::nullopt) {
  if (configs.size() < 2) throw ConfigError("compare needs at least two configs");
  const RunConfig& ref = configs.front();
  for (const auto& c : configs) {
    if (c.problem != ref.problem) {
      throw ConfigError(c.source_path + ": problem '" + c.problem + "' differs from '" +
                        ref.problem + "' in " + ref.source_path);
    }
    if (!(c.context == ref.context)) {
      throw ConfigError(c.source_path + ": context source differs from " + ref.source_path);
    }
    if (c.horizon != ref.horizon) {
      throw ConfigError(c.source_path + ": horizon " + std::to_string(c.horizon) + " differs from " +
                        std::to_string(ref.horizon) + " in " + ref.source_path);
    }
    if (c.plant_noise_std != ref.plant_noise_std) {
      throw ConfigError(c.source_path + ": plant_noise_std differs from " + ref.source_path);
    }
  }
  const std::uint64_t common = seed.value_or(ref.seed);
  CompareResult out;
  std::map<std::string, int> used;
  for (auto& c : configs) {
    c.seed = common;
    std::string label = c.label.empty() ? opt::to_string(c.mode) : c.label;
    if (int n = ++used[label]; n > 1) label += "_" + std::to_string(n);
    out.labels.push_back(label);
    out.runs.push_back(execute(c));
  }

  const plant::TuningProblem p = plant::make_problem(ref.problem);
  const auto n_z = static_cast<std::size_t>(p.n_z);
  const std::size_t n_con = p.n_constraints();
  for (std::size_t r = 1; r < out.runs.size(); ++r) {
    for (std::size_t t = 0; t < ref.horizon; ++t) {
      if (out.runs[r].result.steps[t].context != out.runs[0].result.steps[t].context) {
        throw ConfigError("compare: contexts diverge at step " + std::to_string(t + 1));
      }
    }
  }

  std::string& s = out.csv;
  s = "t";
  for (std::size_t k = 1; k <= n_z; ++k) s += ",z" + std::to_string(k);
  for (const auto& label : out.labels) {
    s += "," + label + ".objective";
    for (std::size_t i = 1; i <= n_con; ++i) s += "," + label + ".g" + std::to_string(i);
    for (std::size_t i = 1; i <= n_con; ++i) s += "," + label + ".cost" + std::to_string(i);
  }
  s += '\n';
  for (std::size_t t = 0; t < ref.horizon; ++t) {
    const auto& first = out.runs[0].result.steps[t];
    s += std::to_string(first.t);
    for (Eigen::Index k = 0; k < first.context.size(); ++k) s += "," + format_number(first.context[k]);
    for (const auto& run : out.runs) {
      const auto& rec = run.result.steps[t];
      s += "," + format_number(rec.objective);
      for (Eigen::Index i = 0; i < rec.constraints.size(); ++i) s += "," + format_number(rec.constraints[i]);
      for (double c : rec.violation_costs) s += "," + format_number(c);
    }
    s += '\n';
  }

  std::string& m = out.summary_csv;
  m = "label,mode,mean_objective";
  for (std::size_t i = 1; i <= n_con; ++i) m += ",max_violation" + std::to_string(i);
  for (std::size_t i = 1; i <= n_con; ++i) m += ",cumulative_cost" + std::to_string(i);
  m += ",coverage_holds\n";
  for (std::size_t r = 0; r < out.runs.size(); ++r) {
    const auto& sum = out.runs[r].result.summary;
    m += out.labels[r] + "," + opt::to_string(out.runs[r].config.mode) + "," +
         format_number(sum.mean_objective);
    for (double v : sum.max_violation) m += "," + format_number(v);
    for (double v : sum.cumulative_cost) m += "," + format_number(v);
    m += sum.coverage_holds ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace vacbo::harness
