// Copyright 2026 The pfednav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// pfednav: run experiments, validate configs, rebuild summaries.
//
//   pfednav run --config PATH [--modes m1,m2] [--seeds s1,s2] [--set key=value ...] --out DIR
//   pfednav validate --config PATH
//   pfednav report --dir DIR

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pfednav/config.hpp"
#include "pfednav/errors.hpp"
#include "pfednav/runner.hpp"

namespace {

pfednav::config::ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  auto cfg = pfednav::config::load_config(path);
  for (const auto& o : overrides) pfednav::config::apply_override(cfg, o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized federated navigation experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, modes, seeds, report_dir;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "Run every (mode, seed) cell and write CSVs plus summary.json");
  run->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--modes", modes, "Comma-separated modes, overriding experiment.modes");
  run->add_option("--seeds", seeds, "Comma-separated seeds, overriding experiment.seeds");
  run->add_option("--set", overrides, "key=value override, repeatable")->take_all();
  run->add_option("--out", out_dir, "Output directory")->required();

  auto* validate = app.add_subcommand("validate", "Parse and validate a config, then print it in canonical form");
  validate->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  validate->add_option("--set", overrides, "key=value override, repeatable")->take_all();

  auto* report = app.add_subcommand("report", "Recompute summary.json of a run directory from its CSVs");
  report->add_option("--dir", report_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (!modes.empty()) overrides.push_back("experiment.modes=" + modes);
      if (!seeds.empty()) overrides.push_back("experiment.seeds=" + seeds);
      overrides.push_back("experiment.output_dir=" + out_dir);
      const auto cfg = load(config_path, overrides);
      pfednav::runner::run(cfg, out_dir);
      std::cout << "wrote " << cfg.modes.size() * cfg.seeds.size() << " cells to " << out_dir << "\n";
    } else if (*validate) {
      const auto cfg = load(config_path, overrides);
      std::cout << pfednav::config::dump_config(cfg);
    } else if (*report) {
      std::cout << pfednav::runner::report(report_dir);
    }
  } catch (const pfednav::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
