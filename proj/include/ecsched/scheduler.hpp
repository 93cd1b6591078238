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

#ifndef ECSCHED_SCHEDULER_HPP
#define ECSCHED_SCHEDULER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ecsched/executors.hpp"
#include "ecsched/resource_model.hpp"
#include "ecsched/router.hpp"
#include "ecsched/task_graph.hpp"

namespace ecsched {

enum class AllocatorKind {
  kRouter,
  kAllEdge,
  kAllCloud,
  kRandom,
  kFixedThreshold,
  kKnapsackOracle,
  kPrimalDual,
};

std::string_view to_string(AllocatorKind kind);
AllocatorKind allocator_from_string(std::string_view name);

struct AllocatorConfig {
  AllocatorKind kind = AllocatorKind::kRouter;
  double random_p = 0.421;    // offload probability of the random policy
  double fixed_tau0 = 0.5;    // threshold of the fixed policy
  double eta = 0.05;          // primal-dual step size
};

// Whether l_used feeding the adaptive threshold is the wall clock since the
// query started or the sum of per-subtask latencies dispatched so far.
enum class LatencyAccounting { kWallClock, kSummed };

struct RunConfig {
  ThresholdConfig threshold;
  BudgetState budget;
  CostNormalizer normalizer;
  AllocatorConfig allocator;
  int max_parallelism = 1;
  std::uint64_t seed = 0;
  LatencyAccounting latency_accounting = LatencyAccounting::kWallClock;
};

enum class EntryStatus { kOk, kFailed, kSkipped };

std::string_view to_string(EntryStatus status);

struct TraceEntry {
  int ordinal = -1;
  int id = 0;
  int position = -1;  // dispatch order; -1 when never dispatched
  double u_score = 0.0;
  double tau = 0.0;
  bool to_cloud = false;
  double started = 0.0;  // seconds since query start at dispatch
  double elapsed = 0.0;
  double spent = 0.0;
  double quality = 0.0;
  std::string output;
  EntryStatus status = EntryStatus::kSkipped;
  std::string error;
};

struct ExecutionTrace {
  std::vector<TraceEntry> entries;  // indexed by node ordinal
  std::string final_text;
  double makespan = 0.0;       // start to last completion, seconds
  double spent_total = 0.0;    // sum of per-entry spends
  double latency_total = 0.0;  // sum of per-entry latencies
  double offload_rate = 0.0;   // cloud decisions / dispatched nodes
  bool failed = false;
};

// Seed stream for one node of one run; the metrics side uses the same
// derivation so profiled and realized simulation draws line up.
inline std::uint64_t node_execution_seed(std::uint64_t run_seed, int ordinal) {
  return run_seed + static_cast<std::uint64_t>(ordinal) * 0x9E3779B97F4A7C15ull;
}

// Runs one query over the DAG. Simulated backends advance a virtual clock
// (event-driven, deterministic); remote backends use a real worker pool.
// Routing decisions and budget updates are serialized in dispatch order
// either way. Failed executions mark their descendants skipped and the
// remaining branches continue.
ExecutionTrace run_query(const TaskDag& dag, const RunConfig& cfg,
                         const UtilityModel* model, ExecutionBackend& backend);

// Outputs in topological order, the final Generate sink last. Throws
// AggregationError naming the missing nodes if anything is unfinished.
std::string aggregate_results(const ExecutionTrace& trace, const TaskDag& dag);

struct QueryJob {
  TaskDag dag;
  RunConfig cfg;
};

struct PositionStat {
  int position = 0;
  int edge_count = 0;
  int cloud_count = 0;
  double mean_tau = 0.0;
};

struct BatchSummary {
  int queries = 0;
  int failures = 0;
  double mean_makespan = 0.0;
  double mean_spent = 0.0;
  double offload_rate = 0.0;
  std::vector<PositionStat> by_position;
};

struct BatchResult {
  std::vector<ExecutionTrace> traces;
  BatchSummary summary;
};

// Runs every job independently; per-query failures are recorded in the
// summary and do not stop the batch.
BatchResult run_batch(const std::vector<QueryJob>& jobs,
                      const UtilityModel* model, ExecutionBackend& backend);

}  // namespace ecsched

#endif  // ECSCHED_SCHEDULER_HPP
