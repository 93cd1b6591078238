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

#ifndef ECSCHED_RESOURCE_MODEL_HPP
#define ECSCHED_RESOURCE_MODEL_HPP

#include <optional>
#include <string>
#include <vector>

namespace ecsched {

// Profiled deltas for one subtask: quality gain, added latency (seconds) and
// added API cost (currency) of running it on the cloud worker instead of the
// edge worker. `text` optionally carries the subtask description so feature
// extraction can reuse the record.
struct ProfileRecord {
  double delta_q = 0.0;
  double delta_l = 0.0;
  double delta_k = 0.0;
  std::string text;
};

// Per-subtask normalization scales for the cost formula.
struct CostNormalizer {
  double l_max_sub = 10.0;
  double k_max_sub = 0.02;
  double epsilon = 1e-4;
};

// Running resource usage against global per-query budgets. c_max is the
// knapsack capacity; when unset it is derived from the global budgets (see
// default_c_max).
struct BudgetState {
  double k_used = 0.0;
  double l_used = 0.0;
  double k_max_global = 0.02;
  double l_max_global = 20.0;
  std::optional<double> c_max;
};

// clip((dl/l_max + dk/k_max) / 2, 0, 1).
double normalized_cost(const ProfileRecord& rec, const CostNormalizer& norm);

// clip(dq / (c + eps), 0, 1). Doubles as the router training target.
double utility(double delta_q, double c, double eps);
double utility(const ProfileRecord& rec, double c, double eps);

// Additive accounting; exceeding the global budgets is allowed and shows up
// through the adaptive threshold, not as an error.
BudgetState record_usage(BudgetState budget, double spent_k, double spent_l);

// Capacity commensurate with the cost normalization:
// (K_max / k_max_sub + L_max / l_max_sub) / 2.
double default_c_max(const BudgetState& budget, const CostNormalizer& norm);

double resolved_c_max(const BudgetState& budget, const CostNormalizer& norm);

// JSONL persistence; one {delta_q, delta_l, delta_k[, text]} object per line.
std::vector<ProfileRecord> read_profile_jsonl(const std::string& path);
void write_profile_jsonl(const std::string& path,
                         const std::vector<ProfileRecord>& records);

}  // namespace ecsched

#endif  // ECSCHED_RESOURCE_MODEL_HPP
