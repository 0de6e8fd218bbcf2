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

// Command-line front end: run, sweep and compare.

#include "vacbo/harness.hpp"

#include "CLI11.hpp"

#include <functional>
#include <iostream>

namespace {

using namespace vacbo;
namespace h = vacbo::harness;
namespace fs = std::filesystem;

struct CommonFlags {
  std::string seed;
  std::string out;
  std::string mode;
  std::string budget;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--seed", f.seed, "Run seed (overrides VACBO_SEED and the config)");
  app->add_option("--out", f.out, "Output directory (overrides VACBO_OUT and the config)");
  app->add_option("--mode", f.mode, "vacbo, cbo_generic or safe_style");
  app->add_option("--budget", f.budget, "Total budget B: one value or one per constraint, comma separated; 'inf' allowed");
}

h::Overrides overrides(const CommonFlags& f) {
  h::Overrides o;
  if (!f.seed.empty()) o.seed = h::parse_seed(f.seed, "--seed");
  if (!f.out.empty()) o.out = f.out;
  if (!f.mode.empty()) o.mode = opt::parse_mode(f.mode);
  if (!f.budget.empty()) o.budget = h::parse_budget_list(f.budget);
  return o;
}

h::RunConfig prepare(const std::string& path, const CommonFlags& f) {
  h::RunConfig c = h::load_config(path);
  h::apply_env(c);
  h::apply_overrides(c, overrides(f));
  return c;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(h::parse_seed(item, "--seeds"));
  return out;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return h::kExitConfig;
  } catch (const InputShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return h::kExitConfig;
  } catch (const plant::PlantError& e) {
    std::cerr << "plant error: " << e.what() << "\n";
    return h::kExitPlant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return h::kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Violation-aware contextual Bayesian optimization"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  std::string run_config;
  auto* run = app.add_subcommand("run", "Run one optimization and write trace.csv and summary.json");
  run->add_option("--config", run_config, "Config JSON")->required();
  add_common(run, run_flags);

  CommonFlags sweep_flags;
  std::string sweep_config, seed_list;
  std::size_t count = 0;
  unsigned threads = 1;
  auto* sweep = app.add_subcommand("sweep", "Run many seeds and estimate budget coverage");
  sweep->add_option("--config", sweep_config, "Config JSON")->required();
  add_common(sweep, sweep_flags);
  sweep->add_option("--seeds", seed_list, "Comma-separated seed list");
  sweep->add_option("--count", count, "Number of consecutive seeds starting at the run seed");
  sweep->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  CommonFlags cmp_flags;
  std::vector<std::string> cmp_configs;
  auto* cmp = app.add_subcommand("compare", "Run several configs on aligned contexts");
  cmp->add_option("--config,configs", cmp_configs, "Config JSON files")->required();
  cmp->add_option("--seed", cmp_flags.seed, "Seed shared by every config (default: the first config's)");
  cmp->add_option("--out", cmp_flags.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return h::kExitConfig;
  }

  if (*run) {
    return guarded([&] {
      const h::RunConfig c = prepare(run_config, run_flags);
      const h::RunOutput o = h::execute(c);
      h::write_run(o, c.out);
      const auto& m = o.result.summary;
      std::cout << c.problem << " " << opt::to_string(c.mode) << " seed " << c.seed
                << ": mean objective " << h::format_number(m.mean_objective)
                << ", coverage " << (m.coverage_holds ? "held" : "broken") << " -> "
                << c.out << "\n";
      return h::kExitOk;
    });
  }

  if (*sweep) {
    return guarded([&] {
      const h::RunConfig c = prepare(sweep_config, sweep_flags);
      std::vector<std::uint64_t> seeds;
      if (!seed_list.empty() && count > 0) throw ConfigError("use either --seeds or --count");
      if (!seed_list.empty()) {
        seeds = parse_seed_list(seed_list);
      } else {
        const std::size_t n = count > 0 ? count : 1;
        for (std::size_t k = 0; k < n; ++k) seeds.push_back(c.seed + k);
      }
      const fs::path out(c.out);
      const h::SweepResult s = h::sweep(c, seeds, threads, out / "runs");
      h::write_atomic(out / "sweep.json", h::sweep_json(s).dump(2) + "\n");
      std::cout << "coverage " << s.successes << "/" << seeds.size() << " = "
                << h::format_number(s.fraction) << " (target " << h::format_number(s.target)
                << ", 95% interval [" << h::format_number(s.interval.lo) << ", "
                << h::format_number(s.interval.hi) << "]) -> " << (out / "sweep.json").string()
                << "\n";
      return h::kExitOk;
    });
  }

  return guarded([&] {
    std::vector<h::RunConfig> configs;
    for (const auto& p : cmp_configs) configs.push_back(h::load_config(p));
    std::optional<std::uint64_t> seed;
    if (const char* s = std::getenv("VACBO_SEED"); s && *s) seed = h::parse_seed(s, "VACBO_SEED");
    if (!cmp_flags.seed.empty()) seed = h::parse_seed(cmp_flags.seed, "--seed");
    std::string out = configs.empty() ? "out" : configs.front().out;
    if (const char* o = std::getenv("VACBO_OUT"); o && *o) out = o;
    if (!cmp_flags.out.empty()) out = cmp_flags.out;
    const h::CompareResult r = h::compare(configs, seed);
    h::write_atomic(fs::path(out) / "compare.csv", r.csv);
    h::write_atomic(fs::path(out) / "compare_summary.csv", r.summary_csv);
    std::cout << r.summary_csv;
    return h::kExitOk;
  });
}
