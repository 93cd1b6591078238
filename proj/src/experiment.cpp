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

#include "ecsched/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "ecsched/errors.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ecsched {

namespace {

using nlohmann::json;

void expect_keys(const json& j, std::initializer_list<const char*> allowed,
                 const std::string& where) {
  for (const auto& [key, unused] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return key == k;
        }) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

void require_path(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw ConfigError(what + " path does not exist: '" + path + "'");
  }
}

double finite_or_throw(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw Error(std::string("non-finite value for ") + what);
  }
  return x;
}

std::string csv(double x) {
  std::ostringstream out;
  out << std::setprecision(10) << finite_or_throw(x, "csv column");
  return out.str();
}

WorkerProfile parse_worker(const json& j, WorkerKind kind,
                           const std::string& where) {
  expect_keys(j,
              {"latency_base", "latency_per_token", "latency_jitter",
               "quality", "quality_noise", "cost_per_token", "temperature"},
              where);
  WorkerProfile profile;
  profile.kind = kind;
  profile.latency_base = j.value("latency_base", profile.latency_base);
  profile.latency_per_token =
      j.value("latency_per_token", profile.latency_per_token);
  profile.latency_jitter = j.value("latency_jitter", profile.latency_jitter);
  profile.quality_noise = j.value("quality_noise", profile.quality_noise);
  profile.cost_per_token = j.value("cost_per_token", profile.cost_per_token);
  profile.temperature = j.value("temperature", profile.temperature);
  if (j.contains("quality")) {
    const json& q = j.at("quality");
    expect_keys(q, {"explain", "analyze", "generate"}, where + ".quality");
    profile.quality_mean[0] = q.value("explain", profile.quality_mean[0]);
    profile.quality_mean[1] = q.value("analyze", profile.quality_mean[1]);
    profile.quality_mean[2] = q.value("generate", profile.quality_mean[2]);
  }
  validate_profile(profile);
  return profile;
}

RemoteEndpoint parse_remote(const json& j, const std::string& where) {
  expect_keys(j,
              {"url", "model", "api_key_env", "price_prompt_token",
               "price_completion_token", "timeout_s", "max_retries",
               "max_in_flight", "temperature"},
              where);
  RemoteEndpoint endpoint;
  endpoint.url = j.at("url").get<std::string>();
  endpoint.model = j.at("model").get<std::string>();
  endpoint.api_key_env = j.value("api_key_env", endpoint.api_key_env);
  endpoint.price_prompt_token =
      j.value("price_prompt_token", endpoint.price_prompt_token);
  endpoint.price_completion_token =
      j.value("price_completion_token", endpoint.price_completion_token);
  endpoint.timeout_s = j.value("timeout_s", endpoint.timeout_s);
  endpoint.max_retries = j.value("max_retries", endpoint.max_retries);
  endpoint.max_in_flight = j.value("max_in_flight", endpoint.max_in_flight);
  endpoint.temperature = j.value("temperature", endpoint.temperature);
  return endpoint;
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;

  cfg.edge.kind = WorkerKind::kEdge;
  cfg.edge.latency_base = 0.8;
  cfg.edge.latency_per_token = 0.005;
  cfg.edge.latency_jitter = 0.15;
  cfg.edge.quality_mean = {0.62, 0.45, 0.55};
  cfg.edge.quality_noise = 0.08;
  cfg.edge.cost_per_token = 0.0;

  cfg.cloud.kind = WorkerKind::kCloud;
  cfg.cloud.latency_base = 4.5;
  cfg.cloud.latency_per_token = 0.02;
  cfg.cloud.latency_jitter = 0.3;
  cfg.cloud.quality_mean = {0.78, 0.88, 0.80};
  cfg.cloud.quality_noise = 0.05;
  cfg.cloud.cost_per_token = 2e-4;

  cfg.tau0_grid = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0};
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("config '" + path + "' is not valid JSON");

  expect_keys(j,
              {"seed", "out_dir", "parallelism", "plan_n_max",
               "latency_accounting", "plans", "workers", "remote_cloud",
               "budget", "normalizer", "threshold", "allocator", "sweep",
               "router"},
              "config");

  ExperimentConfig cfg = default_experiment_config();
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.parallelism = j.value("parallelism", cfg.parallelism);
  cfg.plan_n_max = j.value("plan_n_max", cfg.plan_n_max);
  if (cfg.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (cfg.plan_n_max < 1) throw ConfigError("plan_n_max must be >= 1");

  if (j.contains("latency_accounting")) {
    const std::string mode = j.at("latency_accounting").get<std::string>();
    if (mode == "wall_clock") {
      cfg.latency_accounting = LatencyAccounting::kWallClock;
    } else if (mode == "summed") {
      cfg.latency_accounting = LatencyAccounting::kSummed;
    } else {
      throw ConfigError("latency_accounting must be wall_clock or summed");
    }
  }

  if (j.contains("plans")) {
    const json& plans = j.at("plans");
    expect_keys(plans, {"dir", "synthetic"}, "plans");
    if (plans.contains("dir") && plans.contains("synthetic")) {
      throw ConfigError("plans.dir and plans.synthetic are exclusive");
    }
    if (plans.contains("dir")) {
      cfg.plans_dir = plans.at("dir").get<std::string>();
      cfg.use_synthetic_plans = false;
      require_path(cfg.plans_dir, "plans.dir");
    } else if (plans.contains("synthetic")) {
      const json& synth = plans.at("synthetic");
      expect_keys(synth, {"count", "n_min", "n_max", "edge_density"},
                  "plans.synthetic");
      cfg.synthetic.count = synth.value("count", cfg.synthetic.count);
      cfg.synthetic.n_min = synth.value("n_min", cfg.synthetic.n_min);
      cfg.synthetic.n_max = synth.value("n_max", cfg.synthetic.n_max);
      cfg.synthetic.edge_density =
          synth.value("edge_density", cfg.synthetic.edge_density);
      if (cfg.synthetic.count < 0 || cfg.synthetic.n_min < 2 ||
          cfg.synthetic.n_max < cfg.synthetic.n_min) {
        throw ConfigError("invalid plans.synthetic sizes");
      }
    }
  }

  if (j.contains("workers")) {
    const json& workers = j.at("workers");
    expect_keys(workers, {"edge", "cloud"}, "workers");
    if (workers.contains("edge")) {
      cfg.edge = parse_worker(workers.at("edge"), WorkerKind::kEdge,
                              "workers.edge");
    }
    if (workers.contains("cloud")) {
      cfg.cloud = parse_worker(workers.at("cloud"), WorkerKind::kCloud,
                               "workers.cloud");
    }
  }

  if (j.contains("remote_cloud")) {
    cfg.remote_cloud = parse_remote(j.at("remote_cloud"), "remote_cloud");
  }

  if (j.contains("budget")) {
    const json& budget = j.at("budget");
    expect_keys(budget, {"k_max_global", "l_max_global", "c_max"}, "budget");
    cfg.budget.k_max_global =
        budget.value("k_max_global", cfg.budget.k_max_global);
    cfg.budget.l_max_global =
        budget.value("l_max_global", cfg.budget.l_max_global);
    if (budget.contains("c_max")) {
      cfg.budget.c_max = budget.at("c_max").get<double>();
      if (*cfg.budget.c_max < 0) throw ConfigError("c_max must be nonnegative");
    }
    if (cfg.budget.k_max_global <= 0 || cfg.budget.l_max_global <= 0) {
      throw ConfigError("global budgets must be positive");
    }
  }

  if (j.contains("normalizer")) {
    const json& norm = j.at("normalizer");
    expect_keys(norm, {"l_max_sub", "k_max_sub", "epsilon"}, "normalizer");
    cfg.normalizer.l_max_sub = norm.value("l_max_sub", cfg.normalizer.l_max_sub);
    cfg.normalizer.k_max_sub = norm.value("k_max_sub", cfg.normalizer.k_max_sub);
    cfg.normalizer.epsilon = norm.value("epsilon", cfg.normalizer.epsilon);
    if (cfg.normalizer.l_max_sub <= 0 || cfg.normalizer.k_max_sub <= 0 ||
        cfg.normalizer.epsilon <= 0) {
      throw ConfigError("normalizer constants must be positive");
    }
  }

  if (j.contains("threshold")) {
    const json& threshold = j.at("threshold");
    expect_keys(threshold, {"tau0"}, "threshold");
    cfg.threshold.tau0 = threshold.value("tau0", cfg.threshold.tau0);
    if (cfg.threshold.tau0 < 0 || cfg.threshold.tau0 > 1) {
      throw ConfigError("tau0 must lie in [0, 1]");
    }
  }

  if (j.contains("allocator")) {
    const json& allocator = j.at("allocator");
    expect_keys(allocator, {"kind", "random_p", "fixed_tau0", "eta"},
                "allocator");
    if (allocator.contains("kind")) {
      cfg.allocator.kind =
          allocator_from_string(allocator.at("kind").get<std::string>());
    }
    cfg.allocator.random_p = allocator.value("random_p", cfg.allocator.random_p);
    cfg.allocator.fixed_tau0 =
        allocator.value("fixed_tau0", cfg.allocator.fixed_tau0);
    cfg.allocator.eta = allocator.value("eta", cfg.allocator.eta);
  }

  if (j.contains("sweep")) {
    const json& sweep = j.at("sweep");
    expect_keys(sweep, {"tau0_grid"}, "sweep");
    if (sweep.contains("tau0_grid")) {
      cfg.tau0_grid = sweep.at("tau0_grid").get<std::vector<double>>();
      if (cfg.tau0_grid.empty()) throw ConfigError("tau0_grid is empty");
    }
  }

  if (j.contains("router")) {
    const json& router = j.at("router");
    expect_keys(router, {"checkpoint", "train"}, "router");
    if (router.contains("checkpoint")) {
      cfg.router_checkpoint = router.at("checkpoint").get<std::string>();
      require_path(cfg.router_checkpoint, "router.checkpoint");
    }
    if (router.contains("train")) {
      const json& train = router.at("train");
      expect_keys(train,
                  {"corpus", "synthetic_samples", "epochs", "learning_rate",
                   "batch_size", "weight_decay", "hidden1", "hidden2",
                   "feature_dim"},
                  "router.train");
      RouterTrainSpec& spec = cfg.router_train;
      spec.corpus = train.value("corpus", spec.corpus);
      if (!spec.corpus.empty()) require_path(spec.corpus, "router.train.corpus");
      spec.synthetic_samples =
          train.value("synthetic_samples", spec.synthetic_samples);
      spec.epochs = train.value("epochs", spec.epochs);
      spec.learning_rate = train.value("learning_rate", spec.learning_rate);
      spec.batch_size = train.value("batch_size", spec.batch_size);
      spec.weight_decay = train.value("weight_decay", spec.weight_decay);
      spec.hidden1 = train.value("hidden1", spec.hidden1);
      spec.hidden2 = train.value("hidden2", spec.hidden2);
      spec.feature_dim = train.value("feature_dim", spec.feature_dim);
    }
  }

  return cfg;
}

// ----- synthetic inputs -----

namespace {

const char* const kTopics[] = {
    "the sensor batch",  "the cache layout",   "the query plan",
    "the sorting stage", "the payload schema", "the retry loop",
    "the token stream",  "the index build",    "the merge window",
    "the quota ledger",
};

const char* const kProperties[] = {
    "latency bound",   "unit consistency", "edge cases",
    "error handling",  "resource usage",   "ordering guarantees",
    "numeric stability", "input ranges",
};

std::string explain_desc(SplitMix64& rng) {
  const char* topic = kTopics[rng.next() % std::size(kTopics)];
  return std::string("Explain: restate the question about ") + topic +
         " and list the known quantities.";
}

std::string analyze_desc(SplitMix64& rng, int step) {
  const char* topic = kTopics[rng.next() % std::size(kTopics)];
  const char* prop = kProperties[rng.next() % std::size(kProperties)];
  return "Analyze: verify the " + std::string(prop) + " of " + topic +
         " given step " + std::to_string(step) + ".";
}

std::string generate_desc(SplitMix64& rng) {
  const char* topic = kTopics[rng.next() % std::size(kTopics)];
  return std::string("Generate: combine the findings about ") + topic +
         " into the final answer.";
}

}  // namespace

TaskDag random_valid_dag(int n, double edge_density, SplitMix64& rng) {
  if (n < 2) throw ValidationError("a valid DAG needs at least 2 nodes");
  TaskDag dag;
  dag.n_max = std::max(dag.n_max, n);

  for (int i = 0; i < n; ++i) {
    Subtask node;
    node.id = i + 1;
    node.index = i;
    if (i == 0) {
      node.role = TaskRole::kExplain;
      node.desc = explain_desc(rng);
    } else if (i == n - 1) {
      node.role = TaskRole::kGenerate;
      node.desc = generate_desc(rng);
    } else {
      node.role = TaskRole::kAnalyze;
      node.desc = analyze_desc(rng, i);
    }
    dag.nodes.push_back(std::move(node));
  }

  for (int i = 1; i + 1 < n; ++i) {
    dag.nodes[i].deps.insert(rng.uniform_int(0, i - 1));
    for (int j = 0; j < i; ++j) {
      if (rng.uniform01() < edge_density) dag.nodes[i].deps.insert(j);
    }
  }
  // The Generate sink collects every loose end.
  const auto kids = dag.children();
  for (int i = 0; i + 1 < n; ++i) {
    if (kids[i].empty()) dag.nodes[n - 1].deps.insert(i);
  }
  return dag;
}

std::vector<TaskDag> generate_plans(const SyntheticPlanSpec& spec,
                                    std::uint64_t seed) {
  SplitMix64 rng(mix_seed(seed, 0x706c616eull));
  std::vector<TaskDag> plans;
  plans.reserve(spec.count);
  for (int q = 0; q < spec.count; ++q) {
    const int n = rng.uniform_int(spec.n_min, spec.n_max);
    plans.push_back(random_valid_dag(n, spec.edge_density, rng));
  }
  return plans;
}

std::vector<Subtask> make_profiling_subtasks(int count, std::uint64_t seed) {
  SplitMix64 rng(mix_seed(seed, 0x70726f66ull));
  std::vector<Subtask> subtasks;
  subtasks.reserve(count);
  for (int i = 0; i < count; ++i) {
    Subtask task;
    task.id = i + 1;
    task.index = i;
    const double role_draw = rng.uniform01();
    if (role_draw < 0.25) {
      task.role = TaskRole::kExplain;
      task.desc = explain_desc(rng);
    } else if (role_draw < 0.75) {
      task.role = TaskRole::kAnalyze;
      task.desc = analyze_desc(rng, rng.uniform_int(1, 6));
    } else {
      task.role = TaskRole::kGenerate;
      task.desc = generate_desc(rng);
    }
    subtasks.push_back(std::move(task));
  }
  return subtasks;
}

std::vector<TaskDag> load_plan_dir(const std::string& dir, int n_max) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw ConfigError("no .xml plans found in '" + dir + "'");
  }

  std::vector<TaskDag> plans;
  for (const std::string& file : files) {
    std::ifstream in(file);
    if (!in) throw ValidationError("cannot read plan '" + file + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const PlanDocument doc = parse_plan_xml(buffer.str());
    plans.push_back(repair_dag(build_dag(doc, n_max).dag).dag);
  }
  return plans;
}

// ----- router corpus -----

std::vector<TrainSample> samples_from_records(
    const std::vector<ProfileRecord>& records, const CostNormalizer& norm,
    int feature_dim) {
  std::vector<TrainSample> samples;
  samples.reserve(records.size());
  for (const ProfileRecord& rec : records) {
    if (rec.text.empty()) {
      throw ValidationError("profile record without text cannot be featurized");
    }
    const double c = normalized_cost(rec, norm);
    samples.emplace_back(extract_features(rec.text, feature_dim),
                         utility(rec, c, norm.epsilon));
  }
  return samples;
}

UtilityModel obtain_router(const ExperimentConfig& cfg) {
  if (!cfg.router_checkpoint.empty()) {
    return load_model(cfg.router_checkpoint);
  }
  const RouterTrainSpec& spec = cfg.router_train;
  std::vector<ProfileRecord> records;
  if (!spec.corpus.empty()) {
    records = read_profile_jsonl(spec.corpus);
  } else {
    records = profile_pair(
        cfg.edge, cfg.cloud,
        make_profiling_subtasks(spec.synthetic_samples, cfg.seed),
        mix_seed(cfg.seed, 0x636f7270ull));
  }
  if (records.empty()) throw ValidationError("profiling corpus is empty");

  UtilityModel model =
      make_utility_model(spec.feature_dim, spec.hidden1, spec.hidden2,
                         mix_seed(cfg.seed, 0x696e6974ull));
  TrainConfig train_cfg;
  train_cfg.learning_rate = spec.learning_rate;
  train_cfg.epochs = spec.epochs;
  train_cfg.batch_size = spec.batch_size;
  train_cfg.weight_decay = spec.weight_decay;
  train_cfg.seed = mix_seed(cfg.seed, 0x6f726465ull);
  train(model, samples_from_records(records, cfg.normalizer, spec.feature_dim),
        train_cfg);
  return model;
}

// ----- metrics -----

AggregateMetrics compute_metrics(const std::vector<QueryJob>& jobs,
                                 const std::vector<ExecutionTrace>& traces,
                                 SimulatedBackend& backend,
                                 const CostNormalizer& norm) {
  AggregateMetrics metrics;
  std::int64_t dispatched = 0;
  std::int64_t offloaded = 0;
  double quality_sum = 0.0;
  std::int64_t quality_count = 0;
  double makespan_sum = 0.0;
  double spent_sum = 0.0;
  double cost_sum = 0.0;
  double util_sum = 0.0;
  int runs = 0;

  for (size_t q = 0; q < jobs.size(); ++q) {
    const ExecutionTrace& trace = traces[q];
    if (trace.entries.size() != jobs[q].dag.nodes.size()) continue;
    ++runs;
    makespan_sum += trace.makespan;
    spent_sum += trace.spent_total;
    for (const TraceEntry& entry : trace.entries) {
      if (entry.position < 0) continue;
      ++dispatched;
      if (entry.status == EntryStatus::kOk) {
        quality_sum += entry.quality;
        ++quality_count;
      }
      if (!entry.to_cloud) continue;
      ++offloaded;
      const auto rec = backend.true_profile(
          jobs[q].dag.nodes[entry.ordinal],
          node_execution_seed(jobs[q].cfg.seed, entry.ordinal));
      const double c = normalized_cost(*rec, norm);
      cost_sum += c;
      util_sum += utility(*rec, c, norm.epsilon);
      metrics.total_gain += rec->delta_q;
    }
  }

  if (dispatched > 0) {
    metrics.offload_rate = static_cast<double>(offloaded) / dispatched;
  }
  if (quality_count > 0) metrics.mean_quality = quality_sum / quality_count;
  if (runs > 0) {
    metrics.mean_makespan = makespan_sum / runs;
    metrics.mean_spent = spent_sum / runs;
  }
  if (offloaded > 0) {
    metrics.mean_norm_cost = cost_sum / offloaded;
    metrics.mean_utility = util_sum / offloaded;
  }
  return metrics;
}

std::vector<QueryJob> make_jobs(const ExperimentConfig& cfg,
                                const std::vector<TaskDag>& plans) {
  std::vector<QueryJob> jobs;
  jobs.reserve(plans.size());
  for (size_t q = 0; q < plans.size(); ++q) {
    QueryJob job;
    job.dag = plans[q];
    job.cfg.threshold = cfg.threshold;
    job.cfg.budget = cfg.budget;
    job.cfg.normalizer = cfg.normalizer;
    job.cfg.allocator = cfg.allocator;
    job.cfg.max_parallelism = cfg.parallelism;
    job.cfg.latency_accounting = cfg.latency_accounting;
    job.cfg.seed = mix_seed(cfg.seed, q + 1);
    jobs.push_back(std::move(job));
  }
  return jobs;
}

// ----- subcommands -----

namespace {

std::vector<TaskDag> plans_for(const ExperimentConfig& cfg) {
  if (!cfg.use_synthetic_plans) {
    return load_plan_dir(cfg.plans_dir, cfg.plan_n_max);
  }
  return generate_plans(cfg.synthetic, cfg.seed);
}

void ensure_out_dir(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

}  // namespace

int cmd_validate(const std::vector<std::string>& files, int n_max,
                 std::ostream& out, std::ostream& err) {
  if (files.empty()) {
    err << "validate: no plan files given\n";
    return kExitUsage;
  }
  int exit_code = kExitOk;
  for (const std::string& file : files) {
    std::ifstream in(file);
    if (!in) {
      err << file << ": cannot read file\n";
      exit_code = kExitUsage;
      continue;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
      const PlanDocument doc = parse_plan_xml(buffer.str());
      const BuildResult built = build_dag(doc, n_max);
      const RepairResult repaired = repair_dag(built.dag);
      const std::vector<std::string> violations = check_dag(repaired.dag);
      if (!violations.empty()) {
        err << file << ": repair left an invalid DAG: " << violations.front()
            << "\n";
        exit_code = kExitRuntime;
        continue;
      }
      const int n = static_cast<int>(repaired.dag.nodes.size());
      const int l_crit = critical_path_length(repaired.dag);
      out << file << ": "
          << (repaired.actions.empty() && built.warnings.empty() ? "valid"
                                                                 : "repaired");
      for (const std::string& warning : built.warnings) {
        out << " [" << warning << "]";
      }
      for (const std::string& action : repaired.actions) {
        out << " [" << action << "]";
      }
      out << ", n=" << n << ", L_crit=" << l_crit << ", R_comp=" << std::fixed
          << std::setprecision(3) << compression_ratio(repaired.dag)
          << std::defaultfloat << "\n";
    } catch (const Error& e) {
      err << file << ": " << e.what() << "\n";
      exit_code = kExitUsage;
    }
  }
  return exit_code;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& out,
              std::ostream& err) {
  try {
    ensure_out_dir(cfg);
    const RouterTrainSpec& spec = cfg.router_train;
    std::vector<ProfileRecord> records;
    if (!spec.corpus.empty()) {
      records = read_profile_jsonl(spec.corpus);
    } else {
      records = profile_pair(
          cfg.edge, cfg.cloud,
          make_profiling_subtasks(spec.synthetic_samples, cfg.seed),
          mix_seed(cfg.seed, 0x636f7270ull));
      write_profile_jsonl(out_path(cfg, "profile_corpus.jsonl"), records);
    }
    if (records.empty()) {
      err << "train: the profiling corpus is empty\n";
      return kExitUsage;
    }

    UtilityModel model =
        make_utility_model(spec.feature_dim, spec.hidden1, spec.hidden2,
                           mix_seed(cfg.seed, 0x696e6974ull));
    TrainConfig train_cfg;
    train_cfg.learning_rate = spec.learning_rate;
    train_cfg.epochs = spec.epochs;
    train_cfg.batch_size = spec.batch_size;
    train_cfg.weight_decay = spec.weight_decay;
    train_cfg.seed = mix_seed(cfg.seed, 0x6f726465ull);

    const TrainReport report = train(
        model, samples_from_records(records, cfg.normalizer, spec.feature_dim),
        train_cfg);

    const std::string checkpoint = out_path(cfg, "router.json");
    save_model(checkpoint, model);
    std::ofstream losses(out_path(cfg, "train_loss.csv"));
    losses << "epoch,mse\n";
    for (size_t e = 0; e < report.epoch_loss.size(); ++e) {
      losses << (e + 1) << "," << csv(report.epoch_loss[e]) << "\n";
    }
    out << "trained on " << records.size() << " records, final MSE "
        << report.final_loss() << "\n";
    out << "checkpoint written to " << checkpoint << "\n";
    return kExitOk;
  } catch (const DivergenceError& e) {
    err << "train: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const ValidationError& e) {
    err << "train: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "train: " << e.what() << "\n";
    return kExitRuntime;
  }
}

namespace {

struct MetricsRow {
  AggregateMetrics metrics;
  BatchResult batch;
};

MetricsRow run_allocator(const ExperimentConfig& cfg,
                         const std::vector<TaskDag>& plans,
                         const AllocatorConfig& allocator,
                         const UtilityModel* model,
                         SimulatedBackend& backend) {
  ExperimentConfig local = cfg;
  local.allocator = allocator;
  MetricsRow row;
  const std::vector<QueryJob> jobs = make_jobs(local, plans);
  row.batch = run_batch(jobs, model, backend);
  row.metrics = compute_metrics(jobs, row.batch.traces, backend, cfg.normalizer);
  return row;
}

}  // namespace

int cmd_sweep_threshold(const ExperimentConfig& cfg, std::ostream& out,
                        std::ostream& err) {
  try {
    if (cfg.remote_cloud.has_value()) {
      err << "sweep-threshold: requires simulated workers\n";
      return kExitUsage;
    }
    ensure_out_dir(cfg);
    SimulatedBackend backend(cfg.edge, cfg.cloud);
    const std::vector<TaskDag> plans = plans_for(cfg);
    const UtilityModel model = obtain_router(cfg);

    std::ofstream file(out_path(cfg, "threshold_sweep.csv"));
    const char* header =
        "tau0,offload_rate,mean_quality,mean_latency_s,mean_spent,"
        "mean_norm_cost,mean_utility";
    file << header << "\n";
    out << header << "\n";
    for (double tau0 : cfg.tau0_grid) {
      AllocatorConfig allocator = cfg.allocator;
      allocator.kind = AllocatorKind::kFixedThreshold;
      allocator.fixed_tau0 = tau0;
      const MetricsRow row =
          run_allocator(cfg, plans, allocator, &model, backend);
      std::ostringstream line;
      line << csv(tau0) << "," << csv(row.metrics.offload_rate) << ","
           << csv(row.metrics.mean_quality) << ","
           << csv(row.metrics.mean_makespan) << ","
           << csv(row.metrics.mean_spent) << ","
           << csv(row.metrics.mean_norm_cost) << ","
           << csv(row.metrics.mean_utility);
      file << line.str() << "\n";
      out << line.str() << "\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "sweep-threshold: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "sweep-threshold: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_compare(const ExperimentConfig& cfg, std::ostream& out,
                std::ostream& err) {
  try {
    if (cfg.remote_cloud.has_value()) {
      err << "compare: requires simulated workers\n";
      return kExitUsage;
    }
    ensure_out_dir(cfg);
    SimulatedBackend backend(cfg.edge, cfg.cloud);
    const std::vector<TaskDag> plans = plans_for(cfg);
    const UtilityModel model = obtain_router(cfg);

    const AllocatorKind kinds[] = {
        AllocatorKind::kAllEdge,        AllocatorKind::kAllCloud,
        AllocatorKind::kRandom,         AllocatorKind::kFixedThreshold,
        AllocatorKind::kRouter,         AllocatorKind::kKnapsackOracle,
        AllocatorKind::kPrimalDual,
    };

    std::ofstream file(out_path(cfg, "allocator_compare.csv"));
    const char* header =
        "allocator,offload_rate,mean_quality,mean_makespan_s,mean_spent,"
        "mean_norm_cost,mean_utility,total_gain";
    file << header << "\n";
    out << header << "\n";
    for (AllocatorKind kind : kinds) {
      AllocatorConfig allocator = cfg.allocator;
      allocator.kind = kind;
      const MetricsRow row =
          run_allocator(cfg, plans, allocator, &model, backend);
      std::ostringstream line;
      line << to_string(kind) << "," << csv(row.metrics.offload_rate) << ","
           << csv(row.metrics.mean_quality) << ","
           << csv(row.metrics.mean_makespan) << ","
           << csv(row.metrics.mean_spent) << ","
           << csv(row.metrics.mean_norm_cost) << ","
           << csv(row.metrics.mean_utility) << ","
           << csv(row.metrics.total_gain);
      file << line.str() << "\n";
      out << line.str() << "\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "compare: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "compare: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    ensure_out_dir(cfg);
    const std::vector<TaskDag> plans = plans_for(cfg);

    std::unique_ptr<ExecutionBackend> backend;
    if (cfg.remote_cloud.has_value()) {
      backend = std::make_unique<RemoteBackend>(cfg.edge, *cfg.remote_cloud);
    } else {
      backend = std::make_unique<SimulatedBackend>(cfg.edge, cfg.cloud);
    }

    std::optional<UtilityModel> model;
    if (cfg.allocator.kind == AllocatorKind::kRouter ||
        cfg.allocator.kind == AllocatorKind::kFixedThreshold) {
      model = obtain_router(cfg);
    }

    const std::vector<QueryJob> jobs = make_jobs(cfg, plans);
    const BatchResult batch =
        run_batch(jobs, model ? &*model : nullptr, *backend);

    std::ofstream traces(out_path(cfg, "traces.jsonl"));
    for (size_t q = 0; q < batch.traces.size(); ++q) {
      for (const TraceEntry& entry : batch.traces[q].entries) {
        json line{{"query", q},
                  {"ordinal", entry.ordinal},
                  {"id", entry.id},
                  {"position", entry.position},
                  {"u", entry.u_score},
                  {"tau", entry.tau},
                  {"decision", entry.to_cloud ? "cloud" : "edge"},
                  {"status", std::string(to_string(entry.status))},
                  {"started", entry.started},
                  {"elapsed", entry.elapsed},
                  {"spent", entry.spent},
                  {"quality", entry.quality},
                  {"output", entry.output}};
        if (!entry.error.empty()) line["error"] = entry.error;
        traces << line.dump() << "\n";
      }
    }

    json summary{{"queries", batch.summary.queries},
                 {"failures", batch.summary.failures},
                 {"mean_makespan_s", batch.summary.mean_makespan},
                 {"mean_spent", batch.summary.mean_spent},
                 {"offload_rate", batch.summary.offload_rate}};
    std::ofstream summary_file(out_path(cfg, "summary.json"));
    summary_file << summary.dump(2) << "\n";

    std::ofstream positions(out_path(cfg, "positions.csv"));
    positions << "position,edge_count,cloud_count,mean_tau\n";
    for (const PositionStat& stat : batch.summary.by_position) {
      positions << stat.position << "," << stat.edge_count << ","
                << stat.cloud_count << "," << csv(stat.mean_tau) << "\n";
    }

    out << "queries=" << batch.summary.queries
        << " failures=" << batch.summary.failures
        << " offload_rate=" << batch.summary.offload_rate
        << " mean_makespan_s=" << batch.summary.mean_makespan
        << " mean_spent=" << batch.summary.mean_spent << "\n";
    if (batch.summary.failures > 0) {
      err << "run: " << batch.summary.failures << " query(ies) failed\n";
      return kExitRuntime;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "run: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "run: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace ecsched
