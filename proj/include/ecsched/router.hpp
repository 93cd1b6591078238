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

#ifndef ECSCHED_ROUTER_HPP
#define ECSCHED_ROUTER_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecsched/resource_model.hpp"

namespace ecsched {

using FeatureVector = std::vector<double>;

// Deterministic stand-in for a pretrained text embedding: token n-gram
// hashing into a fixed dimension, L2-normalized. Same text, same vector.
// Throws ValidationError when the text has no tokens.
FeatureVector extract_features(std::string_view text, int dim = 64);

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // row-major [out][in]
  std::vector<double> b;  // [out]
};

// Two-hidden-layer MLP with rectified-linear activations and a sigmoid
// output, so predictions always land in (0, 1).
struct UtilityModel {
  int input_dim = 0;
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;
};

// Uniform fan-in initialization from the given seed.
UtilityModel make_utility_model(int input_dim = 64, int hidden1 = 128,
                                int hidden2 = 64, std::uint64_t seed = 0);

// Forward pass. Throws ShapeError on dimension mismatch.
double predict_utility(const UtilityModel& model, const FeatureVector& z);

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 1;
  int batch_size = 32;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

using TrainSample = std::pair<FeatureVector, double>;

struct TrainReport {
  std::vector<double> epoch_loss;  // mean squared error per epoch
  double final_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

// Minimizes MSE with adaptive moment estimation and decoupled weight decay.
// Deterministic given the seed. Throws DivergenceError (with the epoch) when
// the loss stops being finite, ValidationError on empty data or targets
// outside [0, 1].
TrainReport train(UtilityModel& model, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg);

// --- gradient machinery (exposed so the checks can be composed in tests) ---

std::size_t param_count(const UtilityModel& model);
double get_param(const UtilityModel& model, std::size_t index);
void set_param(UtilityModel& model, std::size_t index, double value);

// Single-sample squared error (prediction - target)^2 and its gradient in
// flat parameter order (layer 0 weights, layer 0 biases, layer 1 ...).
double mse_loss(const UtilityModel& model, const FeatureVector& z,
                double target);
std::vector<double> mse_loss_gradients(const UtilityModel& model,
                                       const FeatureVector& z, double target);

// Central finite difference of the loss along one parameter.
double numeric_mse_gradient(const UtilityModel& model, const FeatureVector& z,
                            double target, std::size_t index,
                            double step = 1e-5);

// 0 when both values vanish (< 1e-8), else |a - n| / max(|a|, |n|).
double relative_gradient_error(double analytic, double numeric);

// Max relative error between analytic and finite-difference gradients over a
// seeded sample of parameters.
double gradient_check(const UtilityModel& model, const FeatureVector& z,
                      double target, double step = 1e-5,
                      std::size_t max_params = 64);

// --- threshold policy ---

struct ThresholdConfig {
  double tau0 = 0.2;
};

// clip(tau0 + k_used/(2 K_max) + l_used/(2 L_max), 0, 1).
double adaptive_threshold(const ThresholdConfig& cfg,
                          const BudgetState& budget);

// Cloud iff the predicted utility strictly exceeds the threshold.
bool route_to_cloud(double u_hat, double tau);

// Versioned JSON checkpoint carrying dimensions, seed, and weights.
void save_model(const std::string& path, const UtilityModel& model);
UtilityModel load_model(const std::string& path);

}  // namespace ecsched

#endif  // ECSCHED_ROUTER_HPP
