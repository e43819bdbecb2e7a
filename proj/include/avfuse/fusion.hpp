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

// Log-linear stream fusion, its frame-level losses and weight gradients,
// and per-frame oracle weights.
//
// For frame t the fused log-posterior is
//
//   log p~(s) = z(s) - logsumexp_s' z(s'),   z(s) = sum_i w_i log p_i(s),
//
// with every weight w_i in [0, 1]. An all-zero weight row gives the uniform
// distribution.

#ifndef AVFUSE_FUSION_HPP_
#define AVFUSE_FUSION_HPP_

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avfuse/core.hpp"

namespace avfuse {

enum class Loss { kCE, kMSE, kMMI, kMM };

std::string loss_name(Loss loss);
/// Accepts "ce", "mse", "mmi", "mm" (any case).
Loss parse_loss(const std::string& name);

/// Normalized fused posteriors; keeps both domains.
class FusedPosteriors {
 public:
  FusedPosteriors(FeatureMatrix probs, FeatureMatrix log_probs)
      : probs_(std::move(probs)), log_probs_(std::move(log_probs)) {}

  const FeatureMatrix& probs() const { return probs_; }
  const FeatureMatrix& log_probs() const { return log_probs_; }
  std::size_t frames() const { return probs_.rows(); }
  std::size_t states() const { return probs_.cols(); }

  /// Wraps a plain probability matrix (rows must already sum to one).
  static FusedPosteriors FromProbs(const FeatureMatrix& probs);

 private:
  FeatureMatrix probs_;
  FeatureMatrix log_probs_;
};

FusedPosteriors fuse(const StreamBundle& bundle, const StreamWeights& weights);

/// -(1/T) sum_t log p~(target_t).
double ce_loss(const FusedPosteriors& fused, const TargetAlignment& targets);
/// (1/(T S)) sum_t sum_s (p*(s) - p~(s))^2.
double mse_loss(const FusedPosteriors& fused, const TargetAlignment& targets);

/// Frame-level MMI surrogate with the denominator occupancies held fixed:
/// -(kappa/T) sum_t sum_s (p*(s) - gamma(s)) log p~(s). Its gradient with
/// respect to log p~ is -kappa (p* - gamma) / T.
double mmi_fixed_gamma_loss(const FusedPosteriors& fused,
                            const TargetAlignment& targets,
                            const FeatureMatrix& gamma_den, double kappa = 1.0);

/// Gradient of a loss with respect to log p~, treating each log p~(s) as a
/// free variable. For MMI `gamma_den` is required; the result is scaled by
/// 1/T like the other losses. `normalizer` overrides T when non-zero.
FeatureMatrix loss_grad_log_fused(const FusedPosteriors& fused,
                                  const TargetAlignment& targets, Loss loss,
                                  const FeatureMatrix* gamma_den = nullptr,
                                  double kappa = 1.0, double normalizer = 0.0);

/// Chains a gradient with respect to log p~ back through the softmax
/// normalization onto the per-frame weights: T x 3.
FeatureMatrix grad_weights_from_log_fused(const StreamBundle& bundle,
                                          const FusedPosteriors& fused,
                                          const FeatureMatrix& grad_log_fused);

/// d loss / d w_t^i, T x 3. CE and MSE need only targets; MMI uses the
/// fixed-occupancy surrogate and requires `gamma_den`.
FeatureMatrix loss_grad_weights(const StreamBundle& bundle,
                                const StreamWeights& weights,
                                const TargetAlignment& targets, Loss loss,
                                const FeatureMatrix* gamma_den = nullptr,
                                double kappa = 1.0);

/// Loss value matching loss_grad_weights.
double loss_value(const FusedPosteriors& fused, const TargetAlignment& targets,
                  Loss loss, const FeatureMatrix* gamma_den = nullptr,
                  double kappa = 1.0);

struct OracleConfig {
  std::size_t max_iters = 500;
  double tol = 1e-8;       // projected-gradient norm
  double step = 1.0;       // first trial step
  double shrink = 0.5;     // backtracking factor
  double armijo = 1e-4;    // sufficient-decrease constant
};

struct OracleFrameResult {
  std::array<double, kNumStreams> weights{};
  double initial_ce = 0.0;  // at equal weights (1/3, 1/3, 1/3)
  double final_ce = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct OracleSolveReport {
  std::vector<OracleFrameResult> frames;
  std::size_t num_converged() const;
};

struct OracleResult {
  StreamWeights weights;
  OracleSolveReport report;
};

/// Frame cross-entropy -log p~(target) for one weight triple. `log_rows`
/// holds the three streams' log-posterior rows for the frame.
double frame_ce(const std::array<std::span<const double>, kNumStreams>& log_rows,
                int target, const std::array<double, kNumStreams>& w);

/// Minimizes frame_ce over [0,1]^3 by projected gradient descent with
/// Armijo backtracking, starting from equal weights. When `trace` is
/// non-null it receives the objective after every iteration (first entry is
/// the starting value).
OracleFrameResult solve_frame_oracle(
    const std::array<std::span<const double>, kNumStreams>& log_rows, int target,
    const OracleConfig& cfg = {}, std::vector<double>* trace = nullptr);

OracleResult oracle_weights(const StreamBundle& bundle,
                            const TargetAlignment& targets,
                            const OracleConfig& cfg = {});

/// One JSON object per line: {"frame", "ce", "iters", "converged"}.
std::string oracle_report_jsonl(const OracleSolveReport& report,
                                std::size_t frame_offset = 0);

}  // namespace avfuse

#endif  // AVFUSE_FUSION_HPP_
