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
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "ecsched/errors.hpp"
#include "ecsched/resource_model.hpp"
#include "ecsched/rng.hpp"

using namespace ecsched;

TEST_CASE("normalized_cost evaluates the clipped mean of scaled deltas") {
  const CostNormalizer norm;  // 10 s, 0.02, 1e-4
  CHECK(normalized_cost({0.0, 0.0, 0.0, ""}, norm) == doctest::Approx(0.0));
  CHECK(normalized_cost({0.0, 10.0, 0.02, ""}, norm) == doctest::Approx(1.0));
  CHECK(normalized_cost({0.0, 5.0, 0.01, ""}, norm) == doctest::Approx(0.5));
  // Out-of-range deltas are absorbed by clipping.
  CHECK(normalized_cost({0.0, 100.0, 1.0, ""}, norm) == doctest::Approx(1.0));
}

TEST_CASE("utility is the clipped benefit-cost ratio") {
  CHECK(utility(0.0, 0.3, 1e-4) == doctest::Approx(0.0));
  CHECK(utility(1.0, 0.0, 1e-4) == doctest::Approx(1.0));
  CHECK(utility(0.3, 0.6, 1e-4) == doctest::Approx(0.49992).epsilon(1e-4));
  // Negative quality gain clips to zero rather than erroring.
  CHECK(utility(-0.5, 0.2, 1e-4) == doctest::Approx(0.0));
}

TEST_CASE("record_usage accumulates additively") {
  BudgetState budget;
  budget = record_usage(budget, 0.0, 0.0);
  CHECK(budget.k_used == doctest::Approx(0.0));
  CHECK(budget.l_used == doctest::Approx(0.0));

  budget = record_usage(budget, 0.0, 2.0);  // edge execution
  CHECK(budget.k_used == doctest::Approx(0.0));
  CHECK(budget.l_used == doctest::Approx(2.0));

  budget = record_usage(budget, 0.004, 3.0);  // cloud execution
  CHECK(budget.k_used == doctest::Approx(0.004));
  CHECK(budget.l_used == doctest::Approx(5.0));
}

TEST_CASE("record_usage totals are order independent") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<double, double>> spends;
    for (int i = 0; i < 8; ++i) {
      spends.emplace_back(rng.uniform01() * 0.01, rng.uniform01() * 3.0);
    }
    BudgetState forward;
    for (const auto& [k, l] : spends) forward = record_usage(forward, k, l);
    BudgetState backward;
    for (auto it = spends.rbegin(); it != spends.rend(); ++it) {
      backward = record_usage(backward, it->first, it->second);
    }
    CHECK(forward.k_used == doctest::Approx(backward.k_used).epsilon(1e-12));
    CHECK(forward.l_used == doctest::Approx(backward.l_used).epsilon(1e-12));
  }
}

TEST_CASE("monotonicity of cost and utility") {
  const CostNormalizer norm;
  SplitMix64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    ProfileRecord rec;
    rec.delta_q = rng.uniform(-0.2, 1.0);
    rec.delta_l = rng.uniform01() * 12.0;
    rec.delta_k = rng.uniform01() * 0.03;
    const double base = normalized_cost(rec, norm);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);

    ProfileRecord more = rec;
    more.delta_l += rng.uniform01() * 3.0;
    CHECK(normalized_cost(more, norm) >= base);
    more = rec;
    more.delta_k += rng.uniform01() * 0.01;
    CHECK(normalized_cost(more, norm) >= base);

    if (rec.delta_q > 0) {
      const double c1 = rng.uniform01();
      const double c2 = c1 + rng.uniform01() * (1.0 - c1);
      CHECK(utility(rec.delta_q, c1, norm.epsilon) >=
            utility(rec.delta_q, c2, norm.epsilon));
    }
    CHECK(utility(rec.delta_q, 0.0, norm.epsilon) ==
          doctest::Approx(rec.delta_q >= norm.epsilon
                              ? 1.0
                              : std::max(0.0, rec.delta_q / norm.epsilon)));
  }
}

TEST_CASE("default c_max derives from the global budgets") {
  BudgetState budget;  // K=0.02, L=20
  const CostNormalizer norm;
  CHECK(default_c_max(budget, norm) == doctest::Approx(1.5));
  CHECK(resolved_c_max(budget, norm) == doctest::Approx(1.5));
  budget.c_max = 0.7;
  CHECK(resolved_c_max(budget, norm) == doctest::Approx(0.7));
}

TEST_CASE("profile JSONL round trip") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "ecsched_profiles.jsonl")
          .string();
  std::vector<ProfileRecord> records{
      {0.35, 2.5, 0.004, "Analyze: verify the cache layout"},
      {0.1, 0.0, 0.0, ""},
  };
  write_profile_jsonl(path, records);
  const std::vector<ProfileRecord> loaded = read_profile_jsonl(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].delta_q == doctest::Approx(0.35));
  CHECK(loaded[0].delta_l == doctest::Approx(2.5));
  CHECK(loaded[0].delta_k == doctest::Approx(0.004));
  CHECK(loaded[0].text == "Analyze: verify the cache layout");
  CHECK(loaded[1].text.empty());
  std::remove(path.c_str());

  CHECK_THROWS_AS(read_profile_jsonl("/nonexistent/profiles.jsonl"),
                  ValidationError);
}
