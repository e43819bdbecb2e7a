// Copyright 2026 The avfuse Authors.
//
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

// Stream integration net: a small ReLU MLP with a sigmoid output layer that
// maps per-frame reliability vectors to the three stream weights. It is
// trained through the fusion rule with CE, MSE or MMI, or with MMI followed
// by MSE fine-tuning ("MM").

#ifndef AVFUSE_INTEGRATION_NET_HPP_
#define AVFUSE_INTEGRATION_NET_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avfuse/core.hpp"
#include "avfuse/decode_score.hpp"
#include "avfuse/fusion.hpp"

namespace avfuse {

/// Input, four hidden layers, three sigmoid outputs.
inline const std::vector<std::size_t> kDefaultNetDims = {43, 43, 25, 17, 10, 3};
inline constexpr int kNetFormatVersion = 1;

struct DenseLayer {
  FeatureMatrix weights;  // out x in
  std::vector<double> bias;
};

class IntegrationNet {
 public:
  IntegrationNet() = default;
  /// Zero-initialized parameters; identity input normalization.
  explicit IntegrationNet(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Affine input standardization x' = (x - offset) * scale, applied before
  /// the first layer. Not trained.
  std::vector<double>& input_offset() { return offset_; }
  std::vector<double>& input_scale() { return scale_; }
  const std::vector<double>& input_offset() const { return offset_; }
  const std::vector<double>& input_scale() const { return scale_; }

  /// Sets the standardization from column means and deviations of `x`.
  void fit_input_normalization(const FeatureMatrix& x);

  std::size_t num_parameters() const;
  /// Flattened parameters: per layer, weights row-major then bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);

  friend bool operator==(const IntegrationNet& a, const IntegrationNet& b);

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
  std::vector<double> offset_;
  std::vector<double> scale_;
};

/// Glorot-uniform weights, zero biases. Throws ConfigError for a chain that
/// is shorter than two entries, contains zeros, or does not end at 3.
IntegrationNet net_init(const std::vector<std::size_t>& dims, std::uint64_t seed);

/// Forward pass over a batch of reliability rows; all outputs in (0, 1).
StreamWeights predict_weights(const IntegrationNet& net, const FeatureMatrix& reliability);

/// Gradient of a scalar loss w.r.t. every net parameter, given the gradient
/// w.r.t. the predicted weights. Same layout as parameters().
std::vector<double> backprop_weights_grad(const IntegrationNet& net,
                                          const FeatureMatrix& reliability,
                                          const FeatureMatrix& grad_weights);

/// One utterance (or any frame set) of training material.
struct TrainUtterance {
  std::string id;
  FeatureMatrix reliability;  // T x input_dim
  StreamBundle bundle;
  TargetAlignment targets;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
  std::size_t frames = 0;
};

/// End-to-end loss and parameter gradient for a set of utterances.
///  - CE / MSE: frame-averaged over all frames.
///  - MMI with `gamma_den` (one per utterance): fixed-occupancy surrogate.
///  - MMI with a graph and no `gamma_den`: negated utterance MMI objective
///    summed and divided by the total frame count.
LossAndGrad evaluate_loss_and_grad(const IntegrationNet& net,
                                   const std::vector<const TrainUtterance*>& batch,
                                   Loss loss, const StateGraph* graph = nullptr,
                                   const std::vector<FeatureMatrix>* gamma_den = nullptr,
                                   double kappa = 1.0);

enum class StopReason { kPatience, kMaxIterations };

struct TrainConfig {
  Loss loss = Loss::kCE;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_frames = 256;        // CE / MSE
  std::size_t batch_utterances = 4;      // MMI
  std::size_t max_iterations = 20000;    // per stage
  std::size_t patience = 1200;
  std::size_t finetune_iterations = 0;   // MM fine-tuning cap; 0 = max_iterations
  double kappa = 1.0;
  std::uint64_t seed = 1;
};

struct TrainStage {
  Loss loss = Loss::kCE;
  std::size_t first_iteration = 0;
  std::size_t iterations = 0;
  std::size_t best_iteration = 0;  // index into TrainReport::trace
  double best_loss = 0.0;
  StopReason stop = StopReason::kMaxIterations;
};

struct TrainReport {
  std::vector<double> trace;  // per-iteration batch loss
  std::vector<TrainStage> stages;
  std::size_t best_iteration = 0;
  double best_loss = 0.0;
  StopReason stop = StopReason::kMaxIterations;
};

struct TrainResult {
  IntegrationNet net;
  TrainReport report;
};

/// Source of batch losses and gradients for the optimizer loop; exposed so
/// the early-stopping contract can be exercised with synthetic losses.
using BatchObjective =
    std::function<LossAndGrad(const IntegrationNet& net, std::size_t iteration)>;

/// Adam loop with early stopping. The first iteration's loss is the loss of
/// the starting parameters and never counts as an improvement; training
/// stops once `patience` consecutive iterations fail to go strictly below
/// the best loss seen. Returns the parameters that produced the best loss.
TrainResult run_optimizer(IntegrationNet net, const BatchObjective& objective,
                          const TrainConfig& cfg, Loss stage_loss);

/// Trains on `data`. The input normalization is fitted to the training
/// reliability rows first. MMI needs `graph`.
TrainResult train(IntegrationNet net, const std::vector<TrainUtterance>& data,
                  const TrainConfig& cfg, const StateGraph* graph = nullptr);

/// CSV text "iteration,loss,best_so_far".
std::string train_log_csv(const TrainReport& report);

void save_net(const IntegrationNet& net, const std::string& path);
IntegrationNet load_net(const std::string& path);
std::string net_to_json(const IntegrationNet& net);
IntegrationNet net_from_json(const std::string& text);

}  // namespace avfuse

#endif  // AVFUSE_INTEGRATION_NET_HPP_
