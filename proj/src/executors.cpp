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

#include "ecsched/executors.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "ecsched/errors.hpp"
#include "ecsched/rng.hpp"
#include "httplib.h"
#include "json.hpp"

namespace ecsched {

std::string_view to_string(WorkerKind kind) {
  return kind == WorkerKind::kEdge ? "edge" : "cloud";
}

void validate_profile(const WorkerProfile& profile) {
  if (profile.latency_base < 0 || profile.latency_per_token < 0 ||
      profile.latency_jitter < 0 || profile.quality_noise < 0 ||
      profile.cost_per_token < 0) {
    throw ValidationError("worker profile rates must be nonnegative");
  }
  if (profile.kind == WorkerKind::kEdge && profile.cost_per_token != 0.0) {
    throw ValidationError("edge workers must have a zero cost rate");
  }
}

namespace {

int count_tokens(std::string_view text) {
  int tokens = 0;
  bool in_token = false;
  for (char c : text) {
    const bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!ws && !in_token) ++tokens;
    in_token = !ws;
  }
  return tokens;
}

constexpr std::uint64_t kLatencySalt = 0x6c6174ull;
constexpr std::uint64_t kQualitySalt = 0x7175616cull;

}  // namespace

ExecutionResult simulate_execute(const WorkerProfile& profile,
                                 const Subtask& task, std::string_view context,
                                 std::uint64_t seed) {
  validate_profile(profile);
  // Both workers draw from the same stream for a given (task, seed), so
  // paired edge/cloud comparisons use common random numbers.
  const std::uint64_t node_seed =
      mix_seed(seed, static_cast<std::uint64_t>(task.id));

  const int input_tokens = count_tokens(context) + count_tokens(task.desc);

  SplitMix64 latency_rng(mix_seed(node_seed, kLatencySalt));
  double elapsed = profile.latency_base +
                   profile.latency_per_token * input_tokens +
                   profile.latency_jitter * latency_rng.normal();
  elapsed = std::max(0.0, elapsed);

  SplitMix64 quality_rng(mix_seed(node_seed, kQualitySalt));
  const double mean = profile.quality_mean[static_cast<int>(task.role)];
  const double quality =
      std::clamp(mean + profile.quality_noise * quality_rng.normal(), 0.0, 1.0);

  ExecutionResult result;
  std::ostringstream out;
  out << "[" << to_string(profile.kind) << ":" << to_string(task.role)
      << "] step " << task.id << " resolved: " << task.desc;
  result.output = out.str();
  result.elapsed = elapsed;
  result.quality = quality;
  if (profile.kind == WorkerKind::kCloud) {
    const int output_tokens = count_tokens(result.output);
    result.spent = profile.cost_per_token * (input_tokens + output_tokens);
  }
  return result;
}

// ----- remote execution -----

namespace {

struct SplitUrl {
  std::string base;  // scheme://authority
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("endpoint URL must include a scheme: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

ExecutionResult remote_execute_impl(const RemoteEndpoint& endpoint,
                                    const Subtask& task,
                                    std::string_view context) {
  const SplitUrl url = split_url(endpoint.url);
  httplib::Client client(url.base);
  const auto timeout_ms = std::chrono::milliseconds(
      static_cast<long>(endpoint.timeout_s * 1000.0));
  client.set_connection_timeout(timeout_ms);
  client.set_read_timeout(timeout_ms);
  client.set_write_timeout(timeout_ms);

  httplib::Headers headers;
  if (const char* key = std::getenv(endpoint.api_key_env.c_str());
      key != nullptr && key[0] != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::string prompt;
  if (!context.empty()) {
    prompt.append(context);
    prompt.push_back('\n');
  }
  prompt.append(task.desc);
  const nlohmann::json body{
      {"model", endpoint.model},
      {"messages",
       nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", endpoint.temperature}};
  const std::string payload = body.dump();

  const int attempts = std::max(1, endpoint.max_retries);
  std::string last_failure = "no attempt made";
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(250L << (attempt - 2)));
    }
    const auto started = std::chrono::steady_clock::now();
    httplib::Result res =
        client.Post(url.path, headers, payload, "application/json");
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
            .count();
    if (!res) {
      last_failure = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_failure = "HTTP status " + std::to_string(res->status);
      continue;
    }

    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) {
      throw MalformedResponseError("response body is not JSON", attempt);
    }
    if (!reply.contains("choices") || !reply["choices"].is_array() ||
        reply["choices"].empty()) {
      throw MalformedResponseError("response has no choices", attempt);
    }
    const auto& message = reply["choices"][0];
    if (!message.contains("message") ||
        !message["message"].contains("content")) {
      throw MalformedResponseError("choice has no message content", attempt);
    }
    if (!reply.contains("usage") ||
        !reply["usage"].contains("prompt_tokens") ||
        !reply["usage"].contains("completion_tokens")) {
      throw MalformedResponseError("response has no token usage", attempt);
    }

    ExecutionResult result;
    result.output = message["message"]["content"].get<std::string>();
    result.elapsed = elapsed;
    const double prompt_tokens =
        reply["usage"]["prompt_tokens"].get<double>();
    const double completion_tokens =
        reply["usage"]["completion_tokens"].get<double>();
    result.spent = prompt_tokens * endpoint.price_prompt_token +
                   completion_tokens * endpoint.price_completion_token;
    return result;
  }
  throw TransportError("remote execution failed: " + last_failure, attempts);
}

}  // namespace

ExecutionResult remote_execute(const RemoteEndpoint& endpoint,
                               const Subtask& task, std::string_view context) {
  return remote_execute_impl(endpoint, task, context);
}

RemoteClient::RemoteClient(RemoteEndpoint endpoint)
    : endpoint_(std::move(endpoint)) {
  if (endpoint_.max_in_flight < 1) {
    throw ValidationError("max_in_flight must be at least 1");
  }
}

ExecutionResult RemoteClient::execute(const Subtask& task,
                                      std::string_view context) {
  {
    std::unique_lock lock(mu_);
    slot_free_.wait(lock,
                    [&] { return in_flight_ < endpoint_.max_in_flight; });
    ++in_flight_;
  }
  try {
    ExecutionResult result = remote_execute_impl(endpoint_, task, context);
    std::lock_guard lock(mu_);
    --in_flight_;
    slot_free_.notify_one();
    return result;
  } catch (...) {
    std::lock_guard lock(mu_);
    --in_flight_;
    slot_free_.notify_one();
    throw;
  }
}

std::vector<ProfileRecord> profile_pair(const WorkerProfile& edge,
                                        const WorkerProfile& cloud,
                                        const std::vector<Subtask>& subtasks,
                                        std::uint64_t seed) {
  validate_profile(edge);
  validate_profile(cloud);
  std::vector<ProfileRecord> records;
  records.reserve(subtasks.size());
  for (size_t i = 0; i < subtasks.size(); ++i) {
    const std::uint64_t task_seed = mix_seed(seed, i);
    const ExecutionResult on_edge =
        simulate_execute(edge, subtasks[i], "", task_seed);
    const ExecutionResult on_cloud =
        simulate_execute(cloud, subtasks[i], "", task_seed);
    ProfileRecord rec;
    rec.delta_q = on_cloud.quality - on_edge.quality;
    rec.delta_l = std::max(0.0, on_cloud.elapsed - on_edge.elapsed);
    rec.delta_k = on_cloud.spent;
    rec.text = subtasks[i].desc;
    records.push_back(std::move(rec));
  }
  return records;
}

SimulatedBackend::SimulatedBackend(WorkerProfile edge, WorkerProfile cloud)
    : edge_(std::move(edge)), cloud_(std::move(cloud)) {
  edge_.kind = WorkerKind::kEdge;
  cloud_.kind = WorkerKind::kCloud;
  validate_profile(edge_);
  validate_profile(cloud_);
}

ExecutionResult SimulatedBackend::run(WorkerKind kind, const Subtask& task,
                                      std::string_view context,
                                      std::uint64_t seed) {
  return simulate_execute(kind == WorkerKind::kEdge ? edge_ : cloud_, task,
                          context, seed);
}

std::optional<ProfileRecord> SimulatedBackend::true_profile(
    const Subtask& task, std::uint64_t seed) {
  const ExecutionResult on_edge = simulate_execute(edge_, task, "", seed);
  const ExecutionResult on_cloud = simulate_execute(cloud_, task, "", seed);
  ProfileRecord rec;
  rec.delta_q = on_cloud.quality - on_edge.quality;
  rec.delta_l = std::max(0.0, on_cloud.elapsed - on_edge.elapsed);
  rec.delta_k = on_cloud.spent;
  rec.text = task.desc;
  return rec;
}

RemoteBackend::RemoteBackend(WorkerProfile edge_profile, RemoteEndpoint cloud)
    : edge_(std::move(edge_profile)), cloud_(std::move(cloud)) {
  edge_.kind = WorkerKind::kEdge;
  validate_profile(edge_);
}

ExecutionResult RemoteBackend::run(WorkerKind kind, const Subtask& task,
                                   std::string_view context,
                                   std::uint64_t seed) {
  if (kind == WorkerKind::kCloud) return cloud_.execute(task, context);
  return simulate_execute(edge_, task, context, seed);
}

}  // namespace ecsched
