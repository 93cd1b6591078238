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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "ecsched/alloc.hpp"
#include "ecsched/errors.hpp"
#include "ecsched/rng.hpp"

using namespace ecsched;

namespace {

AllocationInstance three_items() {
  return {{{0.6, 0.5}, {0.5, 0.4}, {0.3, 0.2}}, 0.6};
}

AllocationInstance random_instance(SplitMix64& rng, int n) {
  AllocationInstance inst;
  for (int i = 0; i < n; ++i) {
    inst.items.push_back({rng.uniform01(), rng.uniform01()});
  }
  inst.capacity = rng.uniform01() * n * 0.5;
  return inst;
}

// Rounds an instance onto the DP grid so the two solvers see the same data.
AllocationInstance rounded(const AllocationInstance& inst, double resolution) {
  AllocationInstance out;
  for (const AllocationItem& item : inst.items) {
    const double w = std::ceil(item.weight / resolution - 1e-9) * resolution;
    out.items.push_back({item.value, w});
  }
  out.capacity = std::floor(inst.capacity / resolution + 1e-9) * resolution;
  return out;
}

}  // namespace

TEST_CASE("knapsack_bruteforce on the three-item instance") {
  const AllocationResult result = knapsack_bruteforce(three_items());
  CHECK(result.total_value == doctest::Approx(0.8));
  CHECK(result.total_weight == doctest::Approx(0.6));
  CHECK(result.selected == std::vector<bool>{false, true, true});
}

TEST_CASE("knapsack_bruteforce trivial cases") {
  CHECK(knapsack_bruteforce({{}, 1.0}).total_value == doctest::Approx(0.0));

  AllocationInstance zero_cap{{{1.0, 0.5}, {2.0, 0.3}}, 0.0};
  const AllocationResult result = knapsack_bruteforce(zero_cap);
  CHECK(result.total_value == doctest::Approx(0.0));
  CHECK(result.selected == std::vector<bool>{false, false});

  AllocationInstance too_big;
  too_big.items.resize(26, {1.0, 0.1});
  too_big.capacity = 1.0;
  CHECK_THROWS_AS(knapsack_bruteforce(too_big), SizeError);
}

TEST_CASE("knapsack_bruteforce tie-breaking prefers light then lexicographic") {
  // Both single items give value 1 at equal weight; {item2} = [0,1] is
  // lexicographically smaller than {item1} = [1,0].
  AllocationInstance tie{{{1.0, 0.3}, {1.0, 0.3}}, 0.3};
  CHECK(knapsack_bruteforce(tie).selected == std::vector<bool>{false, true});

  // Same value, lighter subset wins.
  AllocationInstance lighter{{{1.0, 0.4}, {1.0, 0.2}}, 0.5};
  CHECK(knapsack_bruteforce(lighter).selected ==
        std::vector<bool>{false, true});
}

TEST_CASE("knapsack_dp matches brute force on the example") {
  const AllocationResult dp = knapsack_dp(three_items());
  CHECK(dp.total_value == doctest::Approx(0.8));
  CHECK(dp.selected == std::vector<bool>{false, true, true});
  CHECK(dp.weight_slack == doctest::Approx(3e-3));
}

TEST_CASE("knapsack_dp trivial cases") {
  AllocationInstance oversized{{{2.0, 0.9}}, 0.5};
  CHECK(knapsack_dp(oversized).total_value == doctest::Approx(0.0));

  AllocationInstance free_items{{{1.0, 0.0}, {2.0, 0.0}, {0.5, 0.0}}, 0.0};
  const AllocationResult result = knapsack_dp(free_items);
  CHECK(result.total_value == doctest::Approx(3.5));
  CHECK(result.selected == std::vector<bool>{true, true, true});

  AllocationInstance huge{{{1.0, 0.5}}, 1e6};
  CHECK_THROWS_AS(knapsack_dp(huge, 1e-3), SizeError);
}

TEST_CASE("knapsack_dp equals brute force on rounded instances") {
  SplitMix64 rng(404);
  for (int trial = 0; trial < 40; ++trial) {
    const AllocationInstance inst = random_instance(rng, rng.uniform_int(1, 12));
    const AllocationResult dp = knapsack_dp(inst, 1e-3);
    const AllocationResult exact = knapsack_bruteforce(rounded(inst, 1e-3));
    CHECK(dp.total_value == doctest::Approx(exact.total_value).epsilon(1e-9));
    // Feasible on the rounded weights, hence within slack on true weights.
    CHECK(dp.total_weight <= inst.capacity + dp.weight_slack);
  }
}

TEST_CASE("lagrangian_decide implements the strict threshold rule") {
  CHECK(lagrangian_decide(0.6, 0.3, 1.5));         // 0.6 - 0.45 > 0
  CHECK(lagrangian_decide(0.1, 0.4, 0.0));         // free resources
  CHECK_FALSE(lagrangian_decide(0.2, 0.4, 1.0));   // -0.2 <= 0
  CHECK_FALSE(lagrangian_decide(0.4, 0.4, 1.0));   // boundary is edge
  CHECK_THROWS_AS(lagrangian_decide(0.5, 0.5, -1.0), ValidationError);
}

TEST_CASE("lagrangian offload set equals the ratio rule") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const AllocationInstance inst = random_instance(rng, 12);
    const double lambda = rng.uniform01() * 3.0;
    for (const AllocationItem& item : inst.items) {
      const bool offload = lagrangian_decide(item.value, item.weight, lambda);
      if (item.weight > 0) {
        CHECK(offload == (item.value / item.weight > lambda));
      } else {
        CHECK(offload == (item.value > 0));
      }
    }
  }
}

TEST_CASE("lagrangian_decide is monotone in lambda") {
  SplitMix64 rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const double value = rng.uniform01();
    const double weight = rng.uniform01();
    const double lo = rng.uniform01() * 2.0;
    const double hi = lo + rng.uniform01();
    if (!lagrangian_decide(value, weight, lo)) {
      CHECK_FALSE(lagrangian_decide(value, weight, hi));
    }
  }
}

TEST_CASE("dual_update follows the projected subgradient step") {
  DualState state{0.5, 0.1};
  state = dual_update(state, 0.8, 0.5);
  CHECK(state.lambda == doctest::Approx(0.53));

  DualState near_zero{0.01, 0.1};
  near_zero = dual_update(near_zero, 0.0, 0.5);
  CHECK(near_zero.lambda == doctest::Approx(0.0));

  DualState balanced{0.42, 0.1};
  balanced = dual_update(balanced, 0.7, 0.7);
  CHECK(balanced.lambda == doctest::Approx(0.42));
}

TEST_CASE("dual_update never goes negative and rises when over budget") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    DualState state{0.0, rng.uniform01() * 0.2 + 1e-3};
    for (int step = 0; step < 20; ++step) {
      const double used = rng.uniform01() * 2.0;
      const double cap = rng.uniform01();
      const double before = state.lambda;
      state = dual_update(state, used, cap);
      CHECK(state.lambda >= 0.0);
      if (used > cap) CHECK(state.lambda > before);
    }
  }
}

TEST_CASE("greedy_by_ratio admits by ratio and skips infeasible items") {
  const AllocationResult result = greedy_by_ratio(three_items());
  // Ratios: item3 ~1.499, item2 ~1.250, item1 ~1.200; item1 no longer fits.
  CHECK(result.selected == std::vector<bool>{false, true, true});
  CHECK(result.total_value == doctest::Approx(0.8));

  AllocationInstance roomy{{{0.2, 0.1}, {0.9, 0.5}}, 2.0};
  CHECK(greedy_by_ratio(roomy).selected == std::vector<bool>{true, true});

  CHECK(greedy_by_ratio({{}, 0.0}).selected.empty());
}

TEST_CASE("greedy and lagrangian never beat the DP optimum") {
  SplitMix64 rng(31337);
  for (int trial = 0; trial < 60; ++trial) {
    const AllocationInstance inst = random_instance(rng, 10);
    const AllocationInstance grid = rounded(inst, 1e-3);
    const double optimum = knapsack_dp(inst, 1e-3).total_value;

    const AllocationResult greedy = greedy_by_ratio(grid);
    CHECK(greedy.total_value <= optimum + 1e-9);

    // Lagrangian policy value at a random multiplier, restricted to
    // selections that happen to be feasible on the grid instance.
    const double lambda = rng.uniform01() * 2.0;
    double lag_value = 0.0;
    double lag_weight = 0.0;
    for (const AllocationItem& item : grid.items) {
      if (lagrangian_decide(item.value, item.weight, lambda)) {
        lag_value += item.value;
        lag_weight += item.weight;
      }
    }
    if (lag_weight <= grid.capacity) CHECK(lag_value <= optimum + 1e-9);
  }
}

TEST_CASE("allocation JSON round trip") {
  const AllocationInstance inst = three_items();
  const AllocationInstance back = instance_from_json(instance_to_json(inst));
  REQUIRE(back.items.size() == 3);
  CHECK(back.capacity == doctest::Approx(0.6));
  CHECK(back.items[1].value == doctest::Approx(0.5));
  CHECK(back.items[1].weight == doctest::Approx(0.4));

  const std::string encoded = result_to_json(knapsack_bruteforce(inst));
  CHECK(encoded.find("\"selected\":[1,2]") != std::string::npos);
  CHECK_THROWS_AS(instance_from_json("not json"), ParseError);
}
