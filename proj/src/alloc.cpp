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

#include "ecsched/alloc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "ecsched/errors.hpp"
#include "json.hpp"

namespace ecsched {

namespace {

constexpr int kMaxBruteForceItems = 25;
constexpr std::int64_t kMaxGridCells = 10'000'000;
// Weights are sums of doubles in [0,1]; feasibility comparisons absorb the
// accumulation error so exact-arithmetic-feasible subsets stay feasible.
constexpr double kFeasibilityEps = 1e-9;

AllocationResult finalize(const AllocationInstance& inst,
                          std::vector<bool> selected) {
  AllocationResult result;
  result.selected = std::move(selected);
  for (size_t i = 0; i < inst.items.size(); ++i) {
    if (result.selected[i]) {
      result.total_value += inst.items[i].value;
      result.total_weight += inst.items[i].weight;
    }
  }
  return result;
}

// true if a is lexicographically smaller than b.
bool lex_less(const std::vector<bool>& a, const std::vector<bool>& b) {
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return !a[i];
  }
  return false;
}

// Grid units, rounded up with a relative guard so exact multiples of the
// resolution do not spill into the next cell.
std::int64_t grid_ceil(double weight, double resolution) {
  if (weight <= 0) return 0;
  return static_cast<std::int64_t>(std::ceil(weight / resolution - 1e-9));
}

std::int64_t grid_floor(double capacity, double resolution) {
  if (capacity <= 0) return 0;
  return static_cast<std::int64_t>(std::floor(capacity / resolution + 1e-9));
}

}  // namespace

AllocationResult knapsack_bruteforce(const AllocationInstance& inst) {
  const int n = static_cast<int>(inst.items.size());
  if (n > kMaxBruteForceItems) {
    throw SizeError("brute-force knapsack limited to " +
                    std::to_string(kMaxBruteForceItems) + " items, got " +
                    std::to_string(n));
  }

  std::vector<bool> best(n, false);
  double best_value = 0.0;
  double best_weight = 0.0;
  std::vector<bool> candidate(n, false);

  const std::uint64_t subsets = 1ull << n;
  for (std::uint64_t mask = 0; mask < subsets; ++mask) {
    double value = 0.0;
    double weight = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1ull << i)) {
        value += inst.items[i].value;
        weight += inst.items[i].weight;
      }
    }
    if (weight > inst.capacity + kFeasibilityEps) continue;
    bool better = value > best_value;
    if (!better && value == best_value) {
      if (weight < best_weight) {
        better = true;
      } else if (weight == best_weight) {
        for (int i = 0; i < n; ++i) candidate[i] = (mask & (1ull << i)) != 0;
        better = lex_less(candidate, best);
      }
    }
    if (better) {
      for (int i = 0; i < n; ++i) best[i] = (mask & (1ull << i)) != 0;
      best_value = value;
      best_weight = weight;
    }
  }
  return finalize(inst, std::move(best));
}

AllocationResult knapsack_dp(const AllocationInstance& inst,
                             double resolution) {
  if (resolution <= 0) throw ValidationError("resolution must be positive");
  const int n = static_cast<int>(inst.items.size());
  const std::int64_t cap = grid_floor(inst.capacity, resolution);
  if (cap > kMaxGridCells) {
    throw SizeError("knapsack grid of " + std::to_string(cap) +
                    " cells exceeds the limit of " +
                    std::to_string(kMaxGridCells));
  }

  std::vector<std::int64_t> w(n);
  for (int i = 0; i < n; ++i) w[i] = grid_ceil(inst.items[i].weight, resolution);

  const size_t cells = static_cast<size_t>(cap) + 1;
  // dp holds the best value; weight_at the smallest grid weight achieving it
  // (the deterministic tie-break: prefer lighter, prefer skipping).
  std::vector<double> dp(cells, 0.0);
  std::vector<std::int64_t> weight_at(cells, 0);
  std::vector<std::vector<bool>> take(n, std::vector<bool>(cells, false));

  for (int i = 0; i < n; ++i) {
    if (w[i] > cap) continue;  // can never fit
    for (std::int64_t c = cap; c >= w[i]; --c) {
      const double with_value = dp[c - w[i]] + inst.items[i].value;
      const std::int64_t with_weight = weight_at[c - w[i]] + w[i];
      if (with_value > dp[c] ||
          (with_value == dp[c] && with_weight < weight_at[c])) {
        dp[c] = with_value;
        weight_at[c] = with_weight;
        take[i][c] = true;
      }
    }
  }

  std::vector<bool> selected(n, false);
  std::int64_t c = cap;
  for (int i = n - 1; i >= 0; --i) {
    if (c >= 0 && w[i] <= c && take[i][c]) {
      selected[i] = true;
      c -= w[i];
    }
  }

  AllocationResult result = finalize(inst, std::move(selected));
  result.weight_slack = static_cast<double>(n) * resolution;
  return result;
}

bool lagrangian_decide(double value, double weight, double lambda) {
  if (lambda < 0) throw ValidationError("lambda must be nonnegative");
  return value - lambda * weight > 0.0;
}

DualState dual_update(DualState state, double c_used, double c_max) {
  state.lambda = std::max(0.0, state.lambda + state.eta * (c_used - c_max));
  return state;
}

AllocationResult greedy_by_ratio(const AllocationInstance& inst,
                                 double epsilon) {
  const int n = static_cast<int>(inst.items.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ra = inst.items[a].value / (inst.items[a].weight + epsilon);
    const double rb = inst.items[b].value / (inst.items[b].weight + epsilon);
    return ra > rb;
  });

  std::vector<bool> selected(n, false);
  double used = 0.0;
  for (int i : order) {
    if (used + inst.items[i].weight <= inst.capacity + kFeasibilityEps) {
      selected[i] = true;
      used += inst.items[i].weight;
    }
  }
  return finalize(inst, std::move(selected));
}

std::string instance_to_json(const AllocationInstance& inst) {
  nlohmann::json items = nlohmann::json::array();
  for (const AllocationItem& item : inst.items) {
    items.push_back({{"value", item.value}, {"weight", item.weight}});
  }
  return nlohmann::json{{"capacity", inst.capacity}, {"items", items}}.dump();
}

AllocationInstance instance_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("invalid allocation instance JSON");
  AllocationInstance inst;
  inst.capacity = j.at("capacity").get<double>();
  for (const auto& item : j.at("items")) {
    inst.items.push_back(
        {item.at("value").get<double>(), item.at("weight").get<double>()});
  }
  return inst;
}

std::string result_to_json(const AllocationResult& result) {
  nlohmann::json selected = nlohmann::json::array();
  for (size_t i = 0; i < result.selected.size(); ++i) {
    if (result.selected[i]) selected.push_back(i);
  }
  return nlohmann::json{{"selected", selected},
                        {"total_value", result.total_value},
                        {"total_weight", result.total_weight},
                        {"weight_slack", result.weight_slack}}
      .dump();
}

}  // namespace ecsched
