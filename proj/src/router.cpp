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

#include "ecsched/router.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "ecsched/errors.hpp"
#include "ecsched/rng.hpp"
#include "json.hpp"

namespace ecsched {

// ----- features -----

namespace {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace

FeatureVector extract_features(std::string_view text, int dim) {
  if (dim < 1) throw ValidationError("feature dimension must be positive");
  const std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) {
    throw ValidationError("cannot extract features from empty text");
  }

  FeatureVector v(dim, 0.0);
  auto bump = [&](std::string_view gram) {
    const std::uint64_t h = fnv1a64(gram);
    const int idx = static_cast<int>(h % static_cast<std::uint64_t>(dim));
    v[idx] += (h >> 63) ? -1.0 : 1.0;
  };
  for (const std::string& t : tokens) bump(t);
  for (size_t i = 0; i + 1 < tokens.size(); ++i) {
    bump(tokens[i] + "_" + tokens[i + 1]);
  }

  double norm = std::sqrt(
      std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm < 1e-12) {
    // All hashed signs cancelled; fall back to a single indicator.
    v.assign(dim, 0.0);
    v[fnv1a64(tokens[0]) % static_cast<std::uint64_t>(dim)] = 1.0;
    norm = 1.0;
  }
  for (double& x : v) x /= norm;
  return v;
}

// ----- model -----

namespace {

DenseLayer make_layer(int in, int out, SplitMix64& rng) {
  DenseLayer layer;
  layer.in = in;
  layer.out = out;
  layer.w.resize(static_cast<size_t>(in) * out);
  layer.b.resize(out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& x : layer.w) x = rng.uniform(-bound, bound);
  for (double& x : layer.b) x = rng.uniform(-bound, bound);
  return layer;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ForwardCache {
  std::vector<std::vector<double>> act;  // act[0] = input, act[k] post-ReLU
  double pre_out = 0.0;                  // pre-sigmoid output
  double y = 0.0;
};

ForwardCache forward(const UtilityModel& model, const FeatureVector& z) {
  ForwardCache cache;
  cache.act.reserve(model.layers.size());
  cache.act.push_back(z);
  for (size_t li = 0; li < model.layers.size(); ++li) {
    const DenseLayer& layer = model.layers[li];
    const std::vector<double>& in = cache.act.back();
    std::vector<double> out(layer.out, 0.0);
    for (int o = 0; o < layer.out; ++o) {
      double acc = layer.b[o];
      const double* row = layer.w.data() + static_cast<size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) acc += row[i] * in[i];
      out[o] = acc;
    }
    if (li + 1 == model.layers.size()) {
      cache.pre_out = out[0];
      cache.y = sigmoid(out[0]);
      cache.act.push_back({cache.y});
    } else {
      for (double& x : out) x = std::max(0.0, x);
      cache.act.push_back(std::move(out));
    }
  }
  return cache;
}

void check_shape(const UtilityModel& model, const FeatureVector& z) {
  if (model.layers.empty()) throw ShapeError("model has no layers");
  if (static_cast<int>(z.size()) != model.input_dim) {
    throw ShapeError("feature vector of size " + std::to_string(z.size()) +
                     " does not match model input " +
                     std::to_string(model.input_dim));
  }
}

// Backpropagates d(loss)/d(prediction) into flat gradients (accumulating).
void backward(const UtilityModel& model, const ForwardCache& cache,
              double dloss_dy, std::vector<double>& grad) {
  const size_t layer_count = model.layers.size();
  // delta w.r.t. pre-activation of the layer being processed.
  std::vector<double> delta{dloss_dy * cache.y * (1.0 - cache.y)};

  // Flat offsets per layer.
  std::vector<size_t> offset(layer_count, 0);
  size_t running = 0;
  for (size_t li = 0; li < layer_count; ++li) {
    offset[li] = running;
    running += model.layers[li].w.size() + model.layers[li].b.size();
  }

  for (size_t li = layer_count; li-- > 0;) {
    const DenseLayer& layer = model.layers[li];
    const std::vector<double>& in = cache.act[li];
    double* gw = grad.data() + offset[li];
    double* gb = gw + layer.w.size();
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* row = gw + static_cast<size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) row[i] += d * in[i];
    }
    if (li == 0) break;
    std::vector<double> prev(layer.in, 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      const double* row = layer.w.data() + static_cast<size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) prev[i] += d * row[i];
    }
    // ReLU mask of the previous layer's activation.
    for (int i = 0; i < layer.in; ++i) {
      if (cache.act[li][i] <= 0.0) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
}

}  // namespace

UtilityModel make_utility_model(int input_dim, int hidden1, int hidden2,
                                std::uint64_t seed) {
  if (input_dim < 1 || hidden1 < 1 || hidden2 < 1) {
    throw ValidationError("model dimensions must be positive");
  }
  UtilityModel model;
  model.input_dim = input_dim;
  model.seed = seed;
  SplitMix64 rng(mix_seed(seed, 0x6d6f64656cull));
  model.layers.push_back(make_layer(input_dim, hidden1, rng));
  model.layers.push_back(make_layer(hidden1, hidden2, rng));
  model.layers.push_back(make_layer(hidden2, 1, rng));
  return model;
}

double predict_utility(const UtilityModel& model, const FeatureVector& z) {
  check_shape(model, z);
  return forward(model, z).y;
}

std::size_t param_count(const UtilityModel& model) {
  std::size_t count = 0;
  for (const DenseLayer& layer : model.layers) {
    count += layer.w.size() + layer.b.size();
  }
  return count;
}

namespace {

double* param_ptr(UtilityModel& model, std::size_t index) {
  for (DenseLayer& layer : model.layers) {
    if (index < layer.w.size()) return &layer.w[index];
    index -= layer.w.size();
    if (index < layer.b.size()) return &layer.b[index];
    index -= layer.b.size();
  }
  throw ValidationError("parameter index out of range");
}

}  // namespace

double get_param(const UtilityModel& model, std::size_t index) {
  return *param_ptr(const_cast<UtilityModel&>(model), index);
}

void set_param(UtilityModel& model, std::size_t index, double value) {
  *param_ptr(model, index) = value;
}

double mse_loss(const UtilityModel& model, const FeatureVector& z,
                double target) {
  check_shape(model, z);
  const double y = forward(model, z).y;
  return (y - target) * (y - target);
}

std::vector<double> mse_loss_gradients(const UtilityModel& model,
                                       const FeatureVector& z, double target) {
  check_shape(model, z);
  std::vector<double> grad(param_count(model), 0.0);
  const ForwardCache cache = forward(model, z);
  backward(model, cache, 2.0 * (cache.y - target), grad);
  return grad;
}

double numeric_mse_gradient(const UtilityModel& model, const FeatureVector& z,
                            double target, std::size_t index, double step) {
  UtilityModel scratch = model;
  const double original = get_param(scratch, index);
  set_param(scratch, index, original + step);
  const double up = mse_loss(scratch, z, target);
  set_param(scratch, index, original - step);
  const double down = mse_loss(scratch, z, target);
  return (up - down) / (2.0 * step);
}

double relative_gradient_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-8) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

double gradient_check(const UtilityModel& model, const FeatureVector& z,
                      double target, double step, std::size_t max_params) {
  const std::size_t total = param_count(model);
  std::vector<std::size_t> indices;
  if (total <= max_params) {
    indices.resize(total);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  } else {
    std::set<std::size_t> picked;
    SplitMix64 rng(mix_seed(model.seed, 0x67726164ull));
    picked.insert(total - 1);  // output bias
    while (picked.size() < max_params) {
      picked.insert(static_cast<std::size_t>(rng.next() % total));
    }
    indices.assign(picked.begin(), picked.end());
  }

  const std::vector<double> analytic = mse_loss_gradients(model, z, target);
  double worst = 0.0;
  for (std::size_t index : indices) {
    const double numeric = numeric_mse_gradient(model, z, target, index, step);
    worst = std::max(worst, relative_gradient_error(analytic[index], numeric));
  }
  return worst;
}

TrainReport train(UtilityModel& model, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg) {
  if (data.empty()) throw ValidationError("training data is empty");
  if (cfg.learning_rate <= 0) throw ValidationError("learning rate must be positive");
  if (cfg.epochs < 1) throw ValidationError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ValidationError("batch size must be at least 1");
  for (const TrainSample& sample : data) {
    check_shape(model, sample.first);
    if (sample.second < 0.0 || sample.second > 1.0) {
      throw ValidationError("training targets must lie in [0, 1]");
    }
  }

  const std::size_t params = param_count(model);
  std::vector<double> m(params, 0.0);
  std::vector<double> v(params, 0.0);
  std::vector<double> grad(params, 0.0);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(mix_seed(cfg.seed, 0x747261696eull));

  TrainReport report;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the project PRNG keeps runs reproducible.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng.next() % i;
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(cursor + static_cast<std::size_t>(cfg.batch_size),
                   order.size());
      const double batch_n = static_cast<double>(batch_end - cursor);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = cursor; k < batch_end; ++k) {
        const TrainSample& sample = data[order[k]];
        const ForwardCache cache = forward(model, sample.first);
        const double err = cache.y - sample.second;
        batch_loss += err * err;
        backward(model, cache, 2.0 * err / batch_n, grad);
      }
      epoch_loss += batch_loss;

      ++step;
      const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      std::size_t flat = 0;
      for (DenseLayer& layer : model.layers) {
        auto update = [&](std::vector<double>& theta) {
          for (double& p : theta) {
            const double g = grad[flat];
            m[flat] = kBeta1 * m[flat] + (1.0 - kBeta1) * g;
            v[flat] = kBeta2 * v[flat] + (1.0 - kBeta2) * g * g;
            const double m_hat = m[flat] / bias1;
            const double v_hat = v[flat] / bias2;
            p -= cfg.learning_rate *
                 (m_hat / (std::sqrt(v_hat) + kAdamEps) + cfg.weight_decay * p);
            ++flat;
          }
        };
        update(layer.w);
        update(layer.b);
      }
      cursor = batch_end;
    }

    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) {
      throw DivergenceError("training loss is not finite", epoch + 1);
    }
    report.epoch_loss.push_back(epoch_loss);
  }
  return report;
}

double adaptive_threshold(const ThresholdConfig& cfg,
                          const BudgetState& budget) {
  if (budget.k_max_global <= 0 || budget.l_max_global <= 0) {
    throw ValidationError("global budgets must be positive");
  }
  const double tau = cfg.tau0 + budget.k_used / (2.0 * budget.k_max_global) +
                     budget.l_used / (2.0 * budget.l_max_global);
  return std::clamp(tau, 0.0, 1.0);
}

bool route_to_cloud(double u_hat, double tau) { return u_hat > tau; }

void save_model(const std::string& path, const UtilityModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& layer : model.layers) {
    layers.push_back({{"in", layer.in},
                      {"out", layer.out},
                      {"w", layer.w},
                      {"b", layer.b}});
  }
  const nlohmann::json j{{"format_version", 1},
                         {"input_dim", model.input_dim},
                         {"seed", model.seed},
                         {"layers", layers}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint '" + path + "'");
  out << j.dump(2) << '\n';
}

UtilityModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("invalid checkpoint JSON in '" + path + "'");
  if (j.value("format_version", 0) != 1) {
    throw ValidationError("unsupported checkpoint version in '" + path + "'");
  }
  UtilityModel model;
  model.input_dim = j.at("input_dim").get<int>();
  model.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& layer_json : j.at("layers")) {
    DenseLayer layer;
    layer.in = layer_json.at("in").get<int>();
    layer.out = layer_json.at("out").get<int>();
    layer.w = layer_json.at("w").get<std::vector<double>>();
    layer.b = layer_json.at("b").get<std::vector<double>>();
    if (layer.w.size() != static_cast<size_t>(layer.in) * layer.out ||
        layer.b.size() != static_cast<size_t>(layer.out)) {
      throw ValidationError("checkpoint layer shapes are inconsistent");
    }
    model.layers.push_back(std::move(layer));
  }
  if (model.layers.empty() || model.layers.back().out != 1) {
    throw ValidationError("checkpoint must end in a single-output layer");
  }
  return model;
}

}  // namespace ecsched
