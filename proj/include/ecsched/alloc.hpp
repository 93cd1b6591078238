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

#ifndef ECSCHED_ALLOC_HPP
#define ECSCHED_ALLOC_HPP

#include <string>
#include <vector>

namespace ecsched {

// One offload candidate: value is the quality gain, weight the normalized
// cost in [0, 1].
struct AllocationItem {
  double value = 0.0;
  double weight = 0.0;
};

struct AllocationInstance {
  std::vector<AllocationItem> items;
  double capacity = 0.0;
};

struct AllocationResult {
  std::vector<bool> selected;
  double total_value = 0.0;
  double total_weight = 0.0;
  // Upper bound on constraint violation against the true weights when the
  // solver worked on a rounded instance (0 for exact solvers).
  double weight_slack = 0.0;
};

// Shadow price state for the online primal-dual policy.
struct DualState {
  double lambda = 0.0;
  double eta = 0.05;
};

// Exhaustive search, n <= 25. Ties broken by lower total weight, then by
// lexicographically smallest selection vector.
AllocationResult knapsack_bruteforce(const AllocationInstance& inst);

// Capacity-indexed DP on weights rounded *up* to the resolution grid, so the
// returned selection is feasible on the rounded weights and within
// n * resolution of the true capacity. Throws SizeError past 1e7 grid cells.
AllocationResult knapsack_dp(const AllocationInstance& inst,
                             double resolution = 1e-3);

// Offload iff value - lambda * weight > 0 (strict).
bool lagrangian_decide(double value, double weight, double lambda);

// Projected subgradient step: lambda <- max(0, lambda + eta*(used - cap)).
DualState dual_update(DualState state, double c_used, double c_max);

// Admit items by descending value/(weight+eps) ratio while feasible,
// skipping items that do not fit.
AllocationResult greedy_by_ratio(const AllocationInstance& inst,
                                 double epsilon = 1e-4);

// JSON persistence: {"capacity": c, "items": [{"value": v, "weight": w}]}
// and {"selected": [indices], "total_value": ..., "total_weight": ...}.
std::string instance_to_json(const AllocationInstance& inst);
AllocationInstance instance_from_json(const std::string& text);
std::string result_to_json(const AllocationResult& result);

}  // namespace ecsched

#endif  // ECSCHED_ALLOC_HPP
