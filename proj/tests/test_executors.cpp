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
#include <atomic>
#include <chrono>
#include <thread>
#include <vector>

#include "doctest.h"
#include "ecsched/errors.hpp"
#include "ecsched/executors.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace ecsched;

namespace {

WorkerProfile edge_profile() {
  WorkerProfile p;
  p.kind = WorkerKind::kEdge;
  p.latency_base = 1.0;
  p.latency_per_token = 0.01;
  p.latency_jitter = 0.2;
  p.quality_mean = {0.5, 0.5, 0.5};
  p.quality_noise = 0.1;
  return p;
}

WorkerProfile cloud_profile() {
  WorkerProfile p;
  p.kind = WorkerKind::kCloud;
  p.latency_base = 2.0;
  p.latency_per_token = 0.02;
  p.latency_jitter = 0.3;
  p.quality_mean = {0.9, 0.9, 0.9};
  p.quality_noise = 0.1;
  p.cost_per_token = 2e-5;
  return p;
}

Subtask make_task(int id, TaskRole role, const std::string& desc) {
  Subtask task;
  task.id = id;
  task.index = id - 1;
  task.role = role;
  task.desc = desc;
  return task;
}

// Local chat-completion stand-in with canned usage counts.
class MockServer {
 public:
  explicit MockServer(bool include_usage = true, int status = 200,
                      int delay_ms = 0) {
    server_.Post("/v1/chat/completions", [=, this](const httplib::Request& req,
                                                   httplib::Response& res) {
      const int now = ++active_;
      int expected = peak_.load();
      while (now > expected && !peak_.compare_exchange_weak(expected, now)) {
      }
      if (delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      }
      ++hits_;
      {
        std::lock_guard lock(mu_);
        last_body_ = req.body;
      }
      nlohmann::json reply{
          {"choices",
           nlohmann::json::array(
               {{{"message",
                  {{"role", "assistant"}, {"content", "canned reply"}}}}})}};
      if (include_usage) {
        reply["usage"] = {{"prompt_tokens", 100}, {"completion_tokens", 50}};
      }
      res.status = status;
      res.set_content(reply.dump(), "application/json");
      --active_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  int hits() const { return hits_; }
  int peak_concurrency() const { return peak_; }
  std::string last_body() const {
    std::lock_guard lock(mu_);
    return last_body_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
  mutable std::mutex mu_;
  std::string last_body_;
};

RemoteEndpoint endpoint_for(const MockServer& server) {
  RemoteEndpoint endpoint;
  endpoint.url = "http://127.0.0.1:" + std::to_string(server.port()) +
                 "/v1/chat/completions";
  endpoint.model = "test-model";
  endpoint.price_prompt_token = 2e-5;
  endpoint.price_completion_token = 2e-5;
  endpoint.timeout_s = 5.0;
  return endpoint;
}

}  // namespace

TEST_CASE("simulate_execute keeps edge runs free and deterministic") {
  const Subtask task =
      make_task(3, TaskRole::kAnalyze, "Analyze: check the retry loop");
  const ExecutionResult a = simulate_execute(edge_profile(), task, "ctx", 42);
  const ExecutionResult b = simulate_execute(edge_profile(), task, "ctx", 42);
  CHECK(a.spent == 0.0);
  CHECK(a.elapsed == b.elapsed);
  CHECK(a.quality == b.quality);
  CHECK(a.output == b.output);
  CHECK(a.output.find("step 3") != std::string::npos);
  CHECK(a.output.find("Analyze") != std::string::npos);

  const ExecutionResult c = simulate_execute(edge_profile(), task, "ctx", 43);
  CHECK(a.elapsed != c.elapsed);  // the seed matters
}

TEST_CASE("simulate_execute respects invariants") {
  SUBCASE("cloud runs are paid per token") {
    const Subtask task =
        make_task(1, TaskRole::kExplain, "Explain: one two three");
    const ExecutionResult r = simulate_execute(cloud_profile(), task, "", 7);
    CHECK(r.spent > 0.0);
    CHECK(r.elapsed >= 0.0);
  }
  SUBCASE("a paid edge profile is rejected") {
    WorkerProfile bad = edge_profile();
    bad.cost_per_token = 1e-5;
    CHECK_THROWS_AS(
        simulate_execute(bad, make_task(1, TaskRole::kExplain, "x"), "", 0),
        ValidationError);
  }
}

TEST_CASE("cloud-edge quality gap matches the configured means") {
  const Subtask task = make_task(5, TaskRole::kAnalyze, "Analyze: the gap");
  double delta_sum = 0.0;
  const int trials = 1000;
  for (int seed = 0; seed < trials; ++seed) {
    const ExecutionResult edge = simulate_execute(edge_profile(), task, "", seed);
    const ExecutionResult cloud =
        simulate_execute(cloud_profile(), task, "", seed);
    delta_sum += cloud.quality - edge.quality;
  }
  CHECK(delta_sum / trials == doctest::Approx(0.4).epsilon(0.125));
}

TEST_CASE("profile_pair produces valid records") {
  std::vector<Subtask> tasks;
  for (int i = 1; i <= 40; ++i) {
    tasks.push_back(
        make_task(i, TaskRole::kAnalyze, "Analyze: item " + std::to_string(i)));
  }

  SUBCASE("identical profiles mean zero gain") {
    WorkerProfile same_cloud = edge_profile();
    same_cloud.kind = WorkerKind::kCloud;
    const auto records = profile_pair(edge_profile(), same_cloud, tasks, 3);
    REQUIRE(records.size() == tasks.size());
    for (const ProfileRecord& rec : records) {
      CHECK(rec.delta_q == doctest::Approx(0.0));
      CHECK(rec.delta_l >= 0.0);
      CHECK(rec.delta_k == doctest::Approx(0.0));
    }
  }

  SUBCASE("latency deltas clamp at zero") {
    WorkerProfile slow_edge = edge_profile();
    slow_edge.latency_base = 60.0;
    const auto records = profile_pair(slow_edge, cloud_profile(), tasks, 5);
    for (const ProfileRecord& rec : records) {
      CHECK(rec.delta_l == doctest::Approx(0.0));  // cloud faster than edge
      CHECK(rec.delta_k >= 0.0);
      CHECK(!rec.text.empty());
    }
  }
}

TEST_CASE("remote_execute prices the returned token usage") {
  MockServer server;
  const RemoteEndpoint endpoint = endpoint_for(server);
  const Subtask task = make_task(2, TaskRole::kGenerate, "Generate: the answer");
  const ExecutionResult result =
      remote_execute(endpoint, task, "Step 1 result: ok");
  CHECK(result.output == "canned reply");
  // usage {prompt: 100, completion: 50} at 2e-5 per token.
  CHECK(result.spent == doctest::Approx(0.003));
  CHECK(result.elapsed > 0.0);
  CHECK(result.quality == 0.0);

  const nlohmann::json body = nlohmann::json::parse(server.last_body());
  CHECK(body.at("model") == "test-model");
  CHECK(body.at("temperature") == doctest::Approx(0.6));
  const std::string content = body.at("messages")[0].at("content");
  CHECK(content.find("Step 1 result: ok") != std::string::npos);
  CHECK(content.find("Generate: the answer") != std::string::npos);
}

TEST_CASE("remote_execute fails with a transport error after retries") {
  RemoteEndpoint endpoint;
  endpoint.url = "http://127.0.0.1:1/v1/chat/completions";  // nothing listens
  endpoint.model = "test-model";
  endpoint.timeout_s = 0.3;
  const Subtask task = make_task(1, TaskRole::kExplain, "Explain: x");
  try {
    remote_execute(endpoint, task, "");
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 3);
  }
}

TEST_CASE("remote_execute honors its per-attempt deadline") {
  MockServer server(/*include_usage=*/true, /*status=*/200, /*delay_ms=*/3000);
  RemoteEndpoint endpoint = endpoint_for(server);
  endpoint.timeout_s = 0.2;
  endpoint.max_retries = 1;
  const Subtask task = make_task(1, TaskRole::kExplain, "Explain: x");
  const auto started = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(remote_execute(endpoint, task, ""), TransportError);
  const double waited =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  CHECK(waited < 2.0);  // gave up long before the 3 s server delay
}

TEST_CASE("remote_execute rejects responses without usage") {
  MockServer server(/*include_usage=*/false);
  const Subtask task = make_task(1, TaskRole::kExplain, "Explain: x");
  CHECK_THROWS_AS(remote_execute(endpoint_for(server), task, ""),
                  MalformedResponseError);
}

TEST_CASE("remote_execute retries non-2xx statuses") {
  MockServer server(/*include_usage=*/true, /*status=*/503);
  RemoteEndpoint endpoint = endpoint_for(server);
  endpoint.max_retries = 2;
  const Subtask task = make_task(1, TaskRole::kExplain, "Explain: x");
  try {
    remote_execute(endpoint, task, "");
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 2);
  }
  CHECK(server.hits() == 2);
}

TEST_CASE("RemoteClient enforces the in-flight cap") {
  MockServer server(/*include_usage=*/true, /*status=*/200, /*delay_ms=*/120);
  RemoteEndpoint endpoint = endpoint_for(server);
  endpoint.max_in_flight = 2;
  RemoteClient client(endpoint);

  std::vector<std::thread> callers;
  std::atomic<int> ok{0};
  for (int i = 0; i < 6; ++i) {
    callers.emplace_back([&, i] {
      const Subtask task = make_task(i + 1, TaskRole::kAnalyze, "Analyze: item");
      if (client.execute(task, "").output == "canned reply") ++ok;
    });
  }
  for (std::thread& caller : callers) caller.join();
  CHECK(ok == 6);
  CHECK(server.peak_concurrency() <= 2);
}

TEST_CASE("backends expose profiles only when simulated") {
  SimulatedBackend sim(edge_profile(), cloud_profile());
  const Subtask task = make_task(4, TaskRole::kAnalyze, "Analyze: backends");
  CHECK(sim.simulated());
  const auto rec = sim.true_profile(task, 9);
  REQUIRE(rec.has_value());
  CHECK(rec->delta_k >= 0.0);
  const ExecutionResult direct = simulate_execute(cloud_profile(), task, "", 9);
  const ExecutionResult via = sim.run(WorkerKind::kCloud, task, "", 9);
  CHECK(via.output == direct.output);
  CHECK(via.quality == direct.quality);

  MockServer server;
  RemoteBackend remote(edge_profile(), endpoint_for(server));
  CHECK_FALSE(remote.simulated());
  CHECK_FALSE(remote.true_profile(task, 9).has_value());
  CHECK(remote.run(WorkerKind::kCloud, task, "", 9).output == "canned reply");
  CHECK(remote.run(WorkerKind::kEdge, task, "", 9).spent == 0.0);
}
