// Copyright 2026 The ecsched Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecsched/errors.hpp"
#include "ecsched/experiment.hpp"

namespace {

// Loads the config (or defaults) and applies command-line overrides.
ecsched::ExperimentConfig resolve_config(const std::string& config_path,
                                         const std::optional<std::uint64_t>& seed,
                                         const std::string& out_dir,
                                         const std::optional<int>& parallelism) {
  ecsched::ExperimentConfig cfg =
      config_path.empty() ? ecsched::default_experiment_config()
                          : ecsched::load_experiment_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (parallelism) {
    if (*parallelism < 1) throw ecsched::ConfigError("--parallelism must be >= 1");
    cfg.parallelism = *parallelism;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ecsched: edge-cloud task scheduling engine (plan validation, router "
      "training, threshold sweeps, allocator comparisons, batch runs)"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<int> parallelism;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_option("--parallelism", parallelism,
                 "override per-query max parallelism");

  std::vector<std::string> plan_files;
  int n_max = 7;
  CLI::App* validate =
      app.add_subcommand("validate", "parse, repair, and report plan files");
  validate->add_option("files", plan_files, "plan XML files")->required();
  validate->add_option("--n-max", n_max, "maximum steps per plan");

  CLI::App* train_cmd =
      app.add_subcommand("train", "train the utility router and checkpoint it");
  CLI::App* sweep =
      app.add_subcommand("sweep-threshold", "fixed-threshold sweep over tau0");
  CLI::App* compare =
      app.add_subcommand("compare", "compare allocators on one batch");
  CLI::App* run = app.add_subcommand("run", "run a batch and emit traces");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      return ecsched::cmd_validate(plan_files, n_max, std::cout, std::cerr);
    }
    const ecsched::ExperimentConfig cfg =
        resolve_config(config_path, seed, out_dir, parallelism);
    if (train_cmd->parsed()) {
      return ecsched::cmd_train(cfg, std::cout, std::cerr);
    }
    if (sweep->parsed()) {
      return ecsched::cmd_sweep_threshold(cfg, std::cout, std::cerr);
    }
    if (compare->parsed()) {
      return ecsched::cmd_compare(cfg, std::cout, std::cerr);
    }
    if (run->parsed()) {
      return ecsched::cmd_run(cfg, std::cout, std::cerr);
    }
  } catch (const ecsched::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ecsched::kExitUsage;
  } catch (const ecsched::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ecsched::kExitUsage;
  } catch (const ecsched::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ecsched::kExitRuntime;
  }
  return ecsched::kExitUsage;
}
