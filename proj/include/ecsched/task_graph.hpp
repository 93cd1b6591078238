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

#ifndef ECSCHED_TASK_GRAPH_HPP
#define ECSCHED_TASK_GRAPH_HPP

#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ecsched {

// Role of a plan step. Unrecognized prefixes default to Analyze.
enum class TaskRole { kExplain, kAnalyze, kGenerate };

std::string_view to_string(TaskRole role);

struct Subtask {
  int id = 0;          // external plan ID (positive)
  int index = 0;       // internal ordinal, position in TaskDag::nodes
  std::string desc;    // step text, role prefix included
  std::set<int> deps;  // internal ordinals of prerequisite steps
  TaskRole role = TaskRole::kAnalyze;

  bool operator==(const Subtask&) const = default;
};

// Dependency DAG over plan steps. `deps` on each node is the source of
// truth; `edges()` derives the explicit (parent, child) pair set from it.
struct TaskDag {
  std::vector<Subtask> nodes;
  int n_max = 7;

  std::set<std::pair<int, int>> edges() const;
  std::vector<std::set<int>> children() const;
  bool operator==(const TaskDag&) const = default;
};

// One parsed <Step .../> record, document order preserved.
struct PlanStep {
  int id = 0;
  std::string task;
  std::vector<std::string> rely;  // comma-split, whitespace-trimmed tokens
};

struct PlanDocument {
  std::vector<PlanStep> steps;
};

// Parses a plan document shaped as
//   <Plan><Step ID="1" Task="..." Rely="2,3"/>...</Plan>
// Attribute names are case-sensitive. Throws ParseError (with line) on
// malformed XML and ValidationError on missing/duplicate IDs or missing
// Task attributes.
PlanDocument parse_plan_xml(std::string_view text);

struct BuildResult {
  TaskDag dag;
  std::vector<std::string> warnings;
};

// Turns step records into an unvalidated DAG: truncates to n_max steps,
// maps external IDs to ordinals, infers roles from the "Explain:" /
// "Analyze:" / "Generate:" prefix, and drops dependencies on unknown or
// truncated IDs with a warning.
BuildResult build_dag(const PlanDocument& plan, int n_max = 7);

struct RepairResult {
  TaskDag dag;
  std::vector<std::string> actions;  // human-readable repair log
};

// Total repair: cycle fallback to a linear chain, root and sink
// enforcement. The result always passes check_dag().
RepairResult repair_dag(const TaskDag& dag);

// Kahn's algorithm; ties broken by ascending ordinal. Throws CycleError
// with one witness cycle if the graph is cyclic.
std::vector<int> topological_order(const TaskDag& dag);

// Longest directed path, counted in nodes (unit node weights).
int critical_path_length(const TaskDag& dag);

// (n - L_crit) / n: 0 for a chain, (n-1)/n when everything is parallel.
double compression_ratio(const TaskDag& dag);

// Uncompleted nodes whose prerequisites are all completed.
std::set<int> ready_set(const TaskDag& dag, const std::set<int>& completed);

// Validity checks: acyclic, unique dependency-free Explain root, all nodes
// reachable from the root, at least one Generate node and every Generate
// node a sink, node count within n_max (one slot of slack is allowed for
// an appended aggregation sink). Returns violations; empty means valid.
std::vector<std::string> check_dag(const TaskDag& dag);

inline bool is_valid_dag(const TaskDag& dag) { return check_dag(dag).empty(); }

}  // namespace ecsched

#endif  // ECSCHED_TASK_GRAPH_HPP
