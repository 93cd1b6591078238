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

#include "ecsched/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <queue>
#include <set>
#include <sstream>
#include <thread>

#include "ecsched/alloc.hpp"
#include "ecsched/errors.hpp"
#include "ecsched/rng.hpp"

namespace ecsched {

std::string_view to_string(AllocatorKind kind) {
  switch (kind) {
    case AllocatorKind::kRouter:
      return "router";
    case AllocatorKind::kAllEdge:
      return "all-edge";
    case AllocatorKind::kAllCloud:
      return "all-cloud";
    case AllocatorKind::kRandom:
      return "random";
    case AllocatorKind::kFixedThreshold:
      return "fixed-threshold";
    case AllocatorKind::kKnapsackOracle:
      return "knapsack-oracle";
    case AllocatorKind::kPrimalDual:
      return "primal-dual";
  }
  return "router";
}

AllocatorKind allocator_from_string(std::string_view name) {
  if (name == "router") return AllocatorKind::kRouter;
  if (name == "all-edge") return AllocatorKind::kAllEdge;
  if (name == "all-cloud") return AllocatorKind::kAllCloud;
  if (name == "random") return AllocatorKind::kRandom;
  if (name == "fixed-threshold") return AllocatorKind::kFixedThreshold;
  if (name == "knapsack-oracle") return AllocatorKind::kKnapsackOracle;
  if (name == "primal-dual") return AllocatorKind::kPrimalDual;
  throw ValidationError("unknown allocator '" + std::string(name) + "'");
}

std::string_view to_string(EntryStatus status) {
  switch (status) {
    case EntryStatus::kOk:
      return "ok";
    case EntryStatus::kFailed:
      return "failed";
    case EntryStatus::kSkipped:
      return "skipped";
  }
  return "skipped";
}

namespace {

struct Decision {
  double score = 0.0;
  double tau = 0.0;
  bool to_cloud = false;
};

// Shared decision state; mutated in dispatch order only.
class AllocatorState {
 public:
  AllocatorState(const TaskDag& dag, const RunConfig& cfg,
                 const UtilityModel* model, ExecutionBackend& backend)
      : dag_(dag),
        cfg_(cfg),
        model_(model),
        backend_(backend),
        random_rng_(mix_seed(cfg.seed, 0x72616e64ull)),
        dual_{0.0, cfg.allocator.eta},
        c_cap_(resolved_c_max(cfg.budget, cfg.normalizer)) {
    const AllocatorKind kind = cfg.allocator.kind;
    if ((kind == AllocatorKind::kRouter ||
         kind == AllocatorKind::kFixedThreshold) &&
        model_ == nullptr) {
      throw ValidationError("this allocator requires a router model");
    }
    if (kind == AllocatorKind::kKnapsackOracle ||
        kind == AllocatorKind::kPrimalDual) {
      records_.reserve(dag.nodes.size());
      for (const Subtask& node : dag.nodes) {
        auto rec = backend_.true_profile(
            node, node_execution_seed(cfg.seed, node.index));
        if (!rec) {
          throw ValidationError(
              "oracle allocators need simulated workers with known profiles");
        }
        records_.push_back(*rec);
      }
    }
    if (kind == AllocatorKind::kKnapsackOracle) {
      AllocationInstance inst;
      inst.capacity = c_cap_;
      for (const ProfileRecord& rec : records_) {
        inst.items.push_back(
            {rec.delta_q, normalized_cost(rec, cfg.normalizer)});
      }
      oracle_pick_ = knapsack_dp(inst).selected;
    }
  }

  // budget must already carry the l_used snapshot for this decision point.
  Decision decide(int ordinal, const BudgetState& budget) {
    Decision decision;
    decision.tau = adaptive_threshold(cfg_.threshold, budget);
    const Subtask& node = dag_.nodes[ordinal];
    switch (cfg_.allocator.kind) {
      case AllocatorKind::kRouter: {
        decision.score = predict_utility(
            *model_, extract_features(node.desc, model_->input_dim));
        decision.to_cloud = route_to_cloud(decision.score, decision.tau);
        break;
      }
      case AllocatorKind::kFixedThreshold: {
        decision.score = predict_utility(
            *model_, extract_features(node.desc, model_->input_dim));
        decision.tau = cfg_.allocator.fixed_tau0;
        decision.to_cloud = route_to_cloud(decision.score, decision.tau);
        break;
      }
      case AllocatorKind::kAllEdge:
        decision.score = 0.0;
        decision.to_cloud = false;
        break;
      case AllocatorKind::kAllCloud:
        decision.score = 1.0;
        decision.to_cloud = true;
        break;
      case AllocatorKind::kRandom: {
        // The drawn uniform is recorded as the score.
        decision.score = random_rng_.uniform01();
        decision.to_cloud = decision.score < cfg_.allocator.random_p;
        break;
      }
      case AllocatorKind::kKnapsackOracle: {
        const ProfileRecord& rec = records_[ordinal];
        const double c = normalized_cost(rec, cfg_.normalizer);
        decision.score = utility(rec, c, cfg_.normalizer.epsilon);
        decision.to_cloud = oracle_pick_[ordinal];
        break;
      }
      case AllocatorKind::kPrimalDual: {
        const ProfileRecord& rec = records_[ordinal];
        const double c = normalized_cost(rec, cfg_.normalizer);
        decision.score = utility(rec, c, cfg_.normalizer.epsilon);
        decision.to_cloud = lagrangian_decide(rec.delta_q, c, dual_.lambda);
        if (decision.to_cloud) c_used_ += c;
        dual_ = dual_update(dual_, c_used_, c_cap_);
        break;
      }
    }
    return decision;
  }

 private:
  const TaskDag& dag_;
  const RunConfig& cfg_;
  const UtilityModel* model_;
  ExecutionBackend& backend_;
  SplitMix64 random_rng_;
  DualState dual_;
  double c_used_ = 0.0;
  double c_cap_;
  std::vector<ProfileRecord> records_;
  std::vector<bool> oracle_pick_;
};

// Bookkeeping shared by the simulated and threaded runners.
struct RunState {
  explicit RunState(const TaskDag& dag) : dag(dag) {
    const int n = static_cast<int>(dag.nodes.size());
    entries.resize(n);
    for (int i = 0; i < n; ++i) {
      entries[i].ordinal = i;
      entries[i].id = dag.nodes[i].id;
    }
    kids = dag.children();
    unmet.resize(n);
    for (int i = 0; i < n; ++i) {
      unmet[i] = static_cast<int>(dag.nodes[i].deps.size());
    }
    const std::vector<int> topo = topological_order(dag);
    topo_pos.assign(n, 0);
    for (int p = 0; p < n; ++p) topo_pos[topo[p]] = p;
    terminal.assign(n, false);
  }

  std::string context_for(int ordinal) const {
    std::vector<int> parents(dag.nodes[ordinal].deps.begin(),
                             dag.nodes[ordinal].deps.end());
    std::sort(parents.begin(), parents.end(),
              [&](int a, int b) { return topo_pos[a] < topo_pos[b]; });
    std::string context;
    for (int p : parents) {
      context += "Step " + std::to_string(dag.nodes[p].id) +
                 " result: " + entries[p].output + "\n";
    }
    return context;
  }

  // Marks every not-yet-dispatched descendant of `ordinal` as skipped.
  void skip_descendants(int ordinal) {
    std::queue<int> frontier;
    frontier.push(ordinal);
    while (!frontier.empty()) {
      const int i = frontier.front();
      frontier.pop();
      for (int child : kids[i]) {
        if (terminal[child]) continue;
        terminal[child] = true;
        ++terminal_count;
        entries[child].status = EntryStatus::kSkipped;
        entries[child].error = "upstream failure";
        frontier.push(child);
      }
    }
  }

  static void finalize(ExecutionTrace& trace) {
    int dispatched = 0;
    int cloud = 0;
    for (const TraceEntry& entry : trace.entries) {
      trace.spent_total += entry.spent;
      trace.latency_total += entry.elapsed;
      if (entry.position >= 0) {
        ++dispatched;
        if (entry.to_cloud) ++cloud;
      }
      if (entry.status != EntryStatus::kOk) trace.failed = true;
    }
    trace.offload_rate =
        dispatched > 0 ? static_cast<double>(cloud) / dispatched : 0.0;
  }

  const TaskDag& dag;
  std::vector<TraceEntry> entries;
  std::vector<std::set<int>> kids;
  std::vector<int> unmet;
  std::vector<int> topo_pos;
  std::vector<bool> terminal;
  int terminal_count = 0;
};

ExecutionTrace run_query_simulated(const TaskDag& dag, const RunConfig& cfg,
                                   const UtilityModel* model,
                                   ExecutionBackend& backend) {
  RunState state(dag);
  AllocatorState allocator(dag, cfg, model, backend);
  const int n = static_cast<int>(dag.nodes.size());

  BudgetState budget = cfg.budget;
  budget.k_used = 0.0;
  budget.l_used = 0.0;

  double now = 0.0;
  double latency_sum = 0.0;
  double makespan = 0.0;
  int position = 0;

  std::set<std::pair<double, int>> ready;    // (ready time, ordinal)
  std::set<std::pair<double, int>> running;  // (finish time, ordinal)
  for (int i = 0; i < n; ++i) {
    if (state.unmet[i] == 0) ready.insert({0.0, i});
  }

  while (state.terminal_count < n) {
    while (!ready.empty() &&
           static_cast<int>(running.size()) < cfg.max_parallelism) {
      const auto [ready_time, i] = *ready.begin();
      ready.erase(ready.begin());

      budget.l_used = cfg.latency_accounting == LatencyAccounting::kWallClock
                          ? now
                          : latency_sum;
      const Decision decision = allocator.decide(i, budget);

      TraceEntry& entry = state.entries[i];
      entry.position = position++;
      entry.u_score = decision.score;
      entry.tau = decision.tau;
      entry.to_cloud = decision.to_cloud;
      entry.started = now;

      const WorkerKind kind =
          decision.to_cloud ? WorkerKind::kCloud : WorkerKind::kEdge;
      try {
        const ExecutionResult result = backend.run(
            kind, dag.nodes[i], state.context_for(i),
            node_execution_seed(cfg.seed, i));
        entry.elapsed = result.elapsed;
        entry.spent = result.spent;
        entry.quality = result.quality;
        entry.output = result.output;
        entry.status = EntryStatus::kOk;
        budget.k_used += result.spent;
        latency_sum += result.elapsed;
        running.insert({now + result.elapsed, i});
      } catch (const Error& e) {
        entry.status = EntryStatus::kFailed;
        entry.error = e.what();
        state.terminal[i] = true;
        ++state.terminal_count;
        state.skip_descendants(i);
      }
    }

    if (running.empty()) {
      if (state.terminal_count < n && ready.empty()) {
        // Unreachable for a valid DAG; skipped ancestors explain the rest.
        break;
      }
      continue;
    }

    const auto [finish, i] = *running.begin();
    running.erase(running.begin());
    now = finish;
    makespan = std::max(makespan, finish);
    state.terminal[i] = true;
    ++state.terminal_count;
    for (int child : state.kids[i]) {
      if (state.terminal[child]) continue;
      if (--state.unmet[child] == 0) ready.insert({now, child});
    }
  }

  ExecutionTrace trace;
  trace.entries = std::move(state.entries);
  trace.makespan = makespan;
  RunState::finalize(trace);
  if (!trace.failed) trace.final_text = aggregate_results(trace, dag);
  return trace;
}

ExecutionTrace run_query_threaded(const TaskDag& dag, const RunConfig& cfg,
                                  const UtilityModel* model,
                                  ExecutionBackend& backend) {
  RunState state(dag);
  AllocatorState allocator(dag, cfg, model, backend);
  const int n = static_cast<int>(dag.nodes.size());

  BudgetState budget = cfg.budget;
  budget.k_used = 0.0;
  budget.l_used = 0.0;

  std::mutex mu;
  std::condition_variable wake;
  const auto started = std::chrono::steady_clock::now();
  const auto elapsed_s = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         started)
        .count();
  };

  double latency_sum = 0.0;
  int position = 0;
  int running = 0;
  std::set<std::pair<double, int>> ready;
  for (int i = 0; i < n; ++i) {
    if (state.unmet[i] == 0) ready.insert({0.0, i});
  }
  std::vector<std::thread> workers;

  {
    std::unique_lock lock(mu);
    while (state.terminal_count < n) {
      while (!ready.empty() && running < cfg.max_parallelism) {
        const auto [ready_time, i] = *ready.begin();
        ready.erase(ready.begin());

        budget.l_used = cfg.latency_accounting == LatencyAccounting::kWallClock
                            ? elapsed_s()
                            : latency_sum;
        const Decision decision = allocator.decide(i, budget);
        TraceEntry& entry = state.entries[i];
        entry.position = position++;
        entry.u_score = decision.score;
        entry.tau = decision.tau;
        entry.to_cloud = decision.to_cloud;
        entry.started = elapsed_s();
        const std::string context = state.context_for(i);
        ++running;

        workers.emplace_back([&, i, context,
                              to_cloud = decision.to_cloud]() {
          ExecutionResult result;
          std::string failure;
          try {
            result = backend.run(
                to_cloud ? WorkerKind::kCloud : WorkerKind::kEdge,
                dag.nodes[i], context, node_execution_seed(cfg.seed, i));
          } catch (const Error& e) {
            failure = e.what();
            if (failure.empty()) failure = "execution failed";
          }
          std::lock_guard inner(mu);
          TraceEntry& done = state.entries[i];
          state.terminal[i] = true;
          ++state.terminal_count;
          if (failure.empty()) {
            done.elapsed = result.elapsed;
            done.spent = result.spent;
            done.quality = result.quality;
            done.output = result.output;
            done.status = EntryStatus::kOk;
            budget.k_used += result.spent;
            latency_sum += result.elapsed;
            const double at = elapsed_s();
            for (int child : state.kids[i]) {
              if (state.terminal[child]) continue;
              if (--state.unmet[child] == 0) ready.insert({at, child});
            }
          } else {
            done.status = EntryStatus::kFailed;
            done.error = failure;
            state.skip_descendants(i);
          }
          --running;
          wake.notify_all();
        });
      }
      if (state.terminal_count >= n) break;
      if (running == 0 && ready.empty()) break;  // stranded by failures
      wake.wait(lock);
    }
  }
  for (std::thread& worker : workers) worker.join();

  ExecutionTrace trace;
  trace.entries = state.entries;
  trace.makespan = elapsed_s();
  RunState::finalize(trace);
  if (!trace.failed) trace.final_text = aggregate_results(trace, dag);
  return trace;
}

}  // namespace

ExecutionTrace run_query(const TaskDag& dag, const RunConfig& cfg,
                         const UtilityModel* model, ExecutionBackend& backend) {
  if (cfg.max_parallelism < 1) {
    throw ValidationError("max parallelism must be at least 1");
  }
  if (dag.nodes.empty()) throw ValidationError("cannot run an empty DAG");
  if (backend.simulated()) {
    return run_query_simulated(dag, cfg, model, backend);
  }
  return run_query_threaded(dag, cfg, model, backend);
}

std::string aggregate_results(const ExecutionTrace& trace, const TaskDag& dag) {
  std::vector<int> missing;
  for (const TraceEntry& entry : trace.entries) {
    if (entry.status != EntryStatus::kOk) missing.push_back(entry.ordinal);
  }
  if (!missing.empty()) {
    std::string names;
    for (int i : missing) names += (names.empty() ? "" : ", ") + std::to_string(i);
    throw AggregationError("cannot aggregate, unfinished nodes: " + names,
                           missing);
  }

  const std::vector<int> topo = topological_order(dag);
  int final_sink = -1;
  for (int i : topo) {
    if (dag.nodes[i].role == TaskRole::kGenerate) final_sink = i;
  }

  std::ostringstream out;
  for (int i : topo) {
    if (i == final_sink) continue;
    out << "Step " << dag.nodes[i].id << " result: " << trace.entries[i].output
        << "\n";
  }
  if (final_sink >= 0) {
    out << "Final (step " << dag.nodes[final_sink].id
        << "): " << trace.entries[final_sink].output << "\n";
  }
  return out.str();
}

BatchResult run_batch(const std::vector<QueryJob>& jobs,
                      const UtilityModel* model, ExecutionBackend& backend) {
  BatchResult result;
  result.summary.queries = static_cast<int>(jobs.size());

  double makespan_sum = 0.0;
  double spent_sum = 0.0;
  int succeeded = 0;
  std::int64_t dispatched = 0;
  std::int64_t cloud = 0;
  std::vector<PositionStat> positions;
  std::vector<double> tau_sum;

  for (const QueryJob& job : jobs) {
    ExecutionTrace trace;
    try {
      trace = run_query(job.dag, job.cfg, model, backend);
    } catch (const Error& e) {
      trace.failed = true;
      trace.entries.clear();
      TraceEntry entry;
      entry.status = EntryStatus::kFailed;
      entry.error = e.what();
      trace.entries.push_back(entry);
    }

    if (trace.failed) {
      ++result.summary.failures;
    } else {
      ++succeeded;
      makespan_sum += trace.makespan;
      spent_sum += trace.spent_total;
    }
    for (const TraceEntry& entry : trace.entries) {
      if (entry.position < 0) continue;
      ++dispatched;
      if (entry.to_cloud) ++cloud;
      if (entry.position >= static_cast<int>(positions.size())) {
        positions.resize(entry.position + 1);
        tau_sum.resize(entry.position + 1, 0.0);
        positions[entry.position].position = entry.position;
      }
      PositionStat& stat = positions[entry.position];
      if (entry.to_cloud) {
        ++stat.cloud_count;
      } else {
        ++stat.edge_count;
      }
      tau_sum[entry.position] += entry.tau;
    }
    result.traces.push_back(std::move(trace));
  }

  for (size_t p = 0; p < positions.size(); ++p) {
    const int count = positions[p].edge_count + positions[p].cloud_count;
    positions[p].mean_tau = count > 0 ? tau_sum[p] / count : 0.0;
  }
  result.summary.by_position = std::move(positions);
  if (succeeded > 0) {
    result.summary.mean_makespan = makespan_sum / succeeded;
    result.summary.mean_spent = spent_sum / succeeded;
  }
  result.summary.offload_rate =
      dispatched > 0 ? static_cast<double>(cloud) / dispatched : 0.0;
  return result;
}

}  // namespace ecsched
