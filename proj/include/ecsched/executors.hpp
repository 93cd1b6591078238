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

#ifndef ECSCHED_EXECUTORS_HPP
#define ECSCHED_EXECUTORS_HPP

#include <array>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecsched/resource_model.hpp"
#include "ecsched/task_graph.hpp"

namespace ecsched {

enum class WorkerKind { kEdge, kCloud };

std::string_view to_string(WorkerKind kind);

// Simulated worker: latency is base + per-token + seeded jitter, quality is a
// per-role mean with seeded noise, cost is per token (always 0 on the edge).
struct WorkerProfile {
  WorkerKind kind = WorkerKind::kEdge;
  double latency_base = 1.0;
  double latency_per_token = 0.0;
  double latency_jitter = 0.0;  // stddev, seconds
  std::array<double, 3> quality_mean = {0.5, 0.5, 0.5};  // by TaskRole
  double quality_noise = 0.0;  // stddev
  double cost_per_token = 0.0;
  double temperature = 0.6;
};

// Throws ValidationError on negative rates or a paid edge profile.
void validate_profile(const WorkerProfile& profile);

struct ExecutionResult {
  std::string output;
  double elapsed = 0.0;  // seconds
  double spent = 0.0;    // currency
  double quality = 0.0;  // simulation only; unset (0) for remote runs
};

// Deterministic given (profile, subtask id, seed). Whitespace tokens of
// context + description drive the per-token terms.
ExecutionResult simulate_execute(const WorkerProfile& profile,
                                 const Subtask& task, std::string_view context,
                                 std::uint64_t seed);

// Chat-completion endpoint: JSON request with model/messages/temperature,
// response with choices and token usage. Credentials come from the named
// environment variable; prices are per token.
struct RemoteEndpoint {
  std::string url;  // http://host:port/path
  std::string model;
  std::string api_key_env = "ECSCHED_API_KEY";
  double price_prompt_token = 0.0;
  double price_completion_token = 0.0;
  double timeout_s = 30.0;
  int max_retries = 3;
  int max_in_flight = 4;
  double temperature = 0.6;
};

// One-shot call with retries (exponential backoff from 250 ms). Throws
// TransportError after exhausting retries and MalformedResponseError for
// 2xx bodies missing choices or usage counts. `spent` is computed from the
// returned token counts; `quality` is left unset.
ExecutionResult remote_execute(const RemoteEndpoint& endpoint,
                               const Subtask& task, std::string_view context);

// Pooled client enforcing the endpoint's max-in-flight limit across threads.
class RemoteClient {
 public:
  explicit RemoteClient(RemoteEndpoint endpoint);
  ExecutionResult execute(const Subtask& task, std::string_view context);
  const RemoteEndpoint& endpoint() const { return endpoint_; }

 private:
  RemoteEndpoint endpoint_;
  std::mutex mu_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
};

// Offline profiling: run every subtask on both workers and record the
// quality gain, the added latency (clamped at 0), and the cloud spend.
std::vector<ProfileRecord> profile_pair(const WorkerProfile& edge,
                                        const WorkerProfile& cloud,
                                        const std::vector<Subtask>& subtasks,
                                        std::uint64_t seed);

// Where the scheduler sends work. Implementations must be safe to call from
// multiple scheduler workers at once.
class ExecutionBackend {
 public:
  virtual ~ExecutionBackend() = default;
  virtual bool simulated() const = 0;
  virtual ExecutionResult run(WorkerKind kind, const Subtask& task,
                              std::string_view context, std::uint64_t seed) = 0;
  // True profiled deltas for oracle allocators; only simulation has them.
  virtual std::optional<ProfileRecord> true_profile(const Subtask& task,
                                                    std::uint64_t seed) {
    (void)task;
    (void)seed;
    return std::nullopt;
  }
};

class SimulatedBackend final : public ExecutionBackend {
 public:
  SimulatedBackend(WorkerProfile edge, WorkerProfile cloud);
  bool simulated() const override { return true; }
  ExecutionResult run(WorkerKind kind, const Subtask& task,
                      std::string_view context, std::uint64_t seed) override;
  std::optional<ProfileRecord> true_profile(const Subtask& task,
                                            std::uint64_t seed) override;
  const WorkerProfile& edge() const { return edge_; }
  const WorkerProfile& cloud() const { return cloud_; }

 private:
  WorkerProfile edge_;
  WorkerProfile cloud_;
};

// Simulated edge worker next to a remote cloud endpoint (the usual
// deployment: a local small model plus an API-hosted large one).
class RemoteBackend final : public ExecutionBackend {
 public:
  RemoteBackend(WorkerProfile edge_profile, RemoteEndpoint cloud);
  bool simulated() const override { return false; }
  ExecutionResult run(WorkerKind kind, const Subtask& task,
                      std::string_view context, std::uint64_t seed) override;

 private:
  WorkerProfile edge_;
  RemoteClient cloud_;
};

}  // namespace ecsched

#endif  // ECSCHED_EXECUTORS_HPP
