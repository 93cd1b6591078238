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

#include "ecsched/resource_model.hpp"

#include <algorithm>
#include <fstream>

#include "ecsched/errors.hpp"
#include "json.hpp"

namespace ecsched {

namespace {

double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

double normalized_cost(const ProfileRecord& rec, const CostNormalizer& norm) {
  if (norm.l_max_sub <= 0 || norm.k_max_sub <= 0) {
    throw ValidationError("cost normalizer scales must be positive");
  }
  return clip01((rec.delta_l / norm.l_max_sub + rec.delta_k / norm.k_max_sub) /
                2.0);
}

double utility(double delta_q, double c, double eps) {
  if (eps <= 0) throw ValidationError("utility epsilon must be positive");
  return clip01(delta_q / (c + eps));
}

double utility(const ProfileRecord& rec, double c, double eps) {
  return utility(rec.delta_q, c, eps);
}

BudgetState record_usage(BudgetState budget, double spent_k, double spent_l) {
  budget.k_used += spent_k;
  budget.l_used += spent_l;
  return budget;
}

double default_c_max(const BudgetState& budget, const CostNormalizer& norm) {
  return (budget.k_max_global / norm.k_max_sub +
          budget.l_max_global / norm.l_max_sub) /
         2.0;
}

double resolved_c_max(const BudgetState& budget, const CostNormalizer& norm) {
  return budget.c_max.value_or(default_c_max(budget, norm));
}

std::vector<ProfileRecord> read_profile_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open profile file '" + path + "'");
  std::vector<ProfileRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ParseError("invalid JSON in '" + path + "'", line_no);
    }
    ProfileRecord rec;
    rec.delta_q = j.at("delta_q").get<double>();
    rec.delta_l = j.at("delta_l").get<double>();
    rec.delta_k = j.at("delta_k").get<double>();
    if (j.contains("text")) rec.text = j.at("text").get<std::string>();
    if (rec.delta_l < 0 || rec.delta_k < 0) {
      throw ValidationError("negative delta_l/delta_k in '" + path +
                            "' line " + std::to_string(line_no));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_profile_jsonl(const std::string& path,
                         const std::vector<ProfileRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write profile file '" + path + "'");
  for (const ProfileRecord& rec : records) {
    nlohmann::json j{{"delta_q", rec.delta_q},
                     {"delta_l", rec.delta_l},
                     {"delta_k", rec.delta_k}};
    if (!rec.text.empty()) j["text"] = rec.text;
    out << j.dump() << '\n';
  }
}

}  // namespace ecsched
