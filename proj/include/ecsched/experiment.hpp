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

#ifndef ECSCHED_EXPERIMENT_HPP
#define ECSCHED_EXPERIMENT_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ecsched/rng.hpp"
#include "ecsched/scheduler.hpp"

namespace ecsched {

// Exit code contract shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // validation / usage errors
inline constexpr int kExitRuntime = 2;  // runtime failures

struct SyntheticPlanSpec {
  int count = 50;
  int n_min = 3;
  int n_max = 7;
  double edge_density = 0.35;
};

struct RouterTrainSpec {
  std::string corpus;  // profile JSONL; empty -> synthetic profiling corpus
  int synthetic_samples = 1200;
  int epochs = 60;
  double learning_rate = 3e-3;
  int batch_size = 64;
  double weight_decay = 1e-4;
  int hidden1 = 64;
  int hidden2 = 32;
  int feature_dim = 64;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "out";
  int parallelism = 2;
  int plan_n_max = 7;
  LatencyAccounting latency_accounting = LatencyAccounting::kWallClock;

  std::string plans_dir;  // directory of *.xml plans
  SyntheticPlanSpec synthetic;
  bool use_synthetic_plans = true;

  WorkerProfile edge;
  WorkerProfile cloud;
  std::optional<RemoteEndpoint> remote_cloud;

  BudgetState budget;
  CostNormalizer normalizer;
  ThresholdConfig threshold;
  AllocatorConfig allocator;

  std::vector<double> tau0_grid;
  std::string router_checkpoint;  // load instead of training when set
  RouterTrainSpec router_train;
};

// Simulated worker pair with role-dependent quality gaps; the defaults all
// experiment commands start from.
ExperimentConfig default_experiment_config();

// Strict loader: unknown keys are rejected and referenced paths must exist.
// Throws ConfigError / ParseError.
ExperimentConfig load_experiment_config(const std::string& path);

// ----- synthetic inputs -----

// Layered random DAG that satisfies every validity check by construction:
// an Explain root, Analyze middle layers wired to earlier nodes, and one
// Generate sink collecting all loose ends. n >= 2.
TaskDag random_valid_dag(int n, double edge_density, SplitMix64& rng);

std::vector<TaskDag> generate_plans(const SyntheticPlanSpec& spec,
                                    std::uint64_t seed);

// Standalone role-tagged subtasks for offline profiling.
std::vector<Subtask> make_profiling_subtasks(int count, std::uint64_t seed);

// Loads *.xml plans (sorted by filename), repairing each.
std::vector<TaskDag> load_plan_dir(const std::string& dir, int n_max);

// ----- router corpus -----

std::vector<TrainSample> samples_from_records(
    const std::vector<ProfileRecord>& records, const CostNormalizer& norm,
    int feature_dim);

// Loads a checkpoint when configured, otherwise profiles and trains.
UtilityModel obtain_router(const ExperimentConfig& cfg);

// ----- metrics -----

struct AggregateMetrics {
  double offload_rate = 0.0;
  double mean_quality = 0.0;
  double mean_makespan = 0.0;
  double mean_spent = 0.0;
  double mean_norm_cost = 0.0;  // over offloaded subtasks
  double mean_utility = 0.0;    // over offloaded subtasks
  double total_gain = 0.0;      // summed true quality gain of offloads
};

// True per-node profiles are re-derived from the simulated backend with the
// same seeds the runs used, so realized gains match the executed draws.
AggregateMetrics compute_metrics(const std::vector<QueryJob>& jobs,
                                 const std::vector<ExecutionTrace>& traces,
                                 SimulatedBackend& backend,
                                 const CostNormalizer& norm);

// Batch construction with per-query seeds derived from the config seed.
std::vector<QueryJob> make_jobs(const ExperimentConfig& cfg,
                                const std::vector<TaskDag>& plans);

// ----- subcommands (shared by the CLI and the test suites) -----

int cmd_validate(const std::vector<std::string>& files, int n_max,
                 std::ostream& out, std::ostream& err);
int cmd_train(const ExperimentConfig& cfg, std::ostream& out,
              std::ostream& err);
int cmd_sweep_threshold(const ExperimentConfig& cfg, std::ostream& out,
                        std::ostream& err);
int cmd_compare(const ExperimentConfig& cfg, std::ostream& out,
                std::ostream& err);
int cmd_run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace ecsched

#endif  // ECSCHED_EXPERIMENT_HPP
