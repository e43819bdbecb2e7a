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

#include "avfuse/fusion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace avfuse {
namespace {

void check_shapes(const StreamBundle& bundle, std::size_t frames,
                  const char* what) {
  if (bundle.frames() != frames) {
    throw DimensionError(std::string(what) + ": " + std::to_string(frames) +
                         " frames vs bundle " + std::to_string(bundle.frames()));
  }
}

void check_targets(const FusedPosteriors& fused, const TargetAlignment& targets) {
  if (targets.frames() != fused.frames()) {
    throw DimensionError("targets have " + std::to_string(targets.frames()) +
                         " frames, posteriors " + std::to_string(fused.frames()));
  }
  if (targets.num_states() != fused.states()) {
    throw DimensionError("target state count " + std::to_string(targets.num_states()) +
                         " != posterior state count " + std::to_string(fused.states()));
  }
}

// Writes the normalized log-distribution of z into out; returns logsumexp.
double log_normalize(std::span<const double> z, std::span<double> out) {
  const double m = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - m);
  const double lse = m + std::log(acc);
  for (std::size_t s = 0; s < z.size(); ++s) out[s] = z[s] - lse;
  return lse;
}

std::array<double, kNumStreams> project_box(std::array<double, kNumStreams> w) {
  for (double& v : w) v = std::clamp(v, 0.0, 1.0);
  return w;
}

// Objective and gradient of the frame cross-entropy.
double frame_ce_grad(const std::array<std::span<const double>, kNumStreams>& rows,
                     int target, const std::array<double, kNumStreams>& w,
                     std::array<double, kNumStreams>* grad) {
  const std::size_t n = rows[0].size();
  double m = -std::numeric_limits<double>::infinity();
  // z is recomputed twice rather than stored; n is small.
  auto z_at = [&](std::size_t s) {
    double z = 0.0;
    for (std::size_t i = 0; i < kNumStreams; ++i) z += w[i] * rows[i][s];
    return z;
  };
  for (std::size_t s = 0; s < n; ++s) m = std::max(m, z_at(s));
  double acc = 0.0;
  std::array<double, kNumStreams> ez{};
  for (std::size_t s = 0; s < n; ++s) {
    const double e = std::exp(z_at(s) - m);
    acc += e;
    for (std::size_t i = 0; i < kNumStreams; ++i) ez[i] += e * rows[i][s];
  }
  const double lse = m + std::log(acc);
  const auto ts = static_cast<std::size_t>(target);
  if (grad != nullptr) {
    for (std::size_t i = 0; i < kNumStreams; ++i) {
      (*grad)[i] = ez[i] / acc - rows[i][ts];
    }
  }
  return lse - z_at(ts);
}

}  // namespace

std::string loss_name(Loss loss) {
  switch (loss) {
    case Loss::kCE:
      return "ce";
    case Loss::kMSE:
      return "mse";
    case Loss::kMMI:
      return "mmi";
    case Loss::kMM:
      return "mm";
  }
  return "?";
}

Loss parse_loss(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (n == "ce") return Loss::kCE;
  if (n == "mse") return Loss::kMSE;
  if (n == "mmi") return Loss::kMMI;
  if (n == "mm") return Loss::kMM;
  throw ConfigError("unknown loss '" + name + "' (expected ce|mse|mmi|mm)");
}

FusedPosteriors FusedPosteriors::FromProbs(const FeatureMatrix& probs) {
  FeatureMatrix logs(probs.rows(), probs.cols());
  for (std::size_t t = 0; t < probs.rows(); ++t) {
    double sum = 0.0;
    for (std::size_t s = 0; s < probs.cols(); ++s) {
      if (!(probs(t, s) > 0.0)) throw DataError("fused posterior entry must be > 0");
      sum += probs(t, s);
      logs(t, s) = std::log(probs(t, s));
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("fused posterior row does not sum to 1");
  }
  return FusedPosteriors(probs, std::move(logs));
}

FusedPosteriors fuse(const StreamBundle& bundle, const StreamWeights& weights) {
  check_shapes(bundle, weights.frames(), "fuse");
  const std::size_t n = bundle.frames();
  const std::size_t s_count = bundle.states();
  FeatureMatrix probs(n, s_count);
  FeatureMatrix logs(n, s_count);
  std::vector<double> z(s_count);
  for (std::size_t t = 0; t < n; ++t) {
    std::fill(z.begin(), z.end(), 0.0);
    for (std::size_t i = 0; i < kNumStreams; ++i) {
      const double w = weights(t, i);
      if (w == 0.0) continue;
      auto lp = bundle[i].log_probs().row(t);
      for (std::size_t s = 0; s < s_count; ++s) z[s] += w * lp[s];
    }
    auto lrow = logs.row(t);
    log_normalize(z, lrow);
    auto prow = probs.row(t);
    for (std::size_t s = 0; s < s_count; ++s) prow[s] = std::exp(lrow[s]);
  }
  return FusedPosteriors(std::move(probs), std::move(logs));
}

double ce_loss(const FusedPosteriors& fused, const TargetAlignment& targets) {
  check_targets(fused, targets);
  if (fused.frames() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 0; t < fused.frames(); ++t) {
    acc -= fused.log_probs()(t, static_cast<std::size_t>(targets[t]));
  }
  return acc / static_cast<double>(fused.frames());
}

double mse_loss(const FusedPosteriors& fused, const TargetAlignment& targets) {
  check_targets(fused, targets);
  if (fused.frames() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 0; t < fused.frames(); ++t) {
    for (std::size_t s = 0; s < fused.states(); ++s) {
      const double target = static_cast<int>(s) == targets[t] ? 1.0 : 0.0;
      const double d = target - fused.probs()(t, s);
      acc += d * d;
    }
  }
  return acc / static_cast<double>(fused.frames() * fused.states());
}

double mmi_fixed_gamma_loss(const FusedPosteriors& fused,
                            const TargetAlignment& targets,
                            const FeatureMatrix& gamma_den, double kappa) {
  check_targets(fused, targets);
  if (gamma_den.rows() != fused.frames() || gamma_den.cols() != fused.states()) {
    throw DimensionError("gamma_den shape does not match fused posteriors");
  }
  if (fused.frames() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 0; t < fused.frames(); ++t) {
    for (std::size_t s = 0; s < fused.states(); ++s) {
      const double target = static_cast<int>(s) == targets[t] ? 1.0 : 0.0;
      acc += (target - gamma_den(t, s)) * fused.log_probs()(t, s);
    }
  }
  return -kappa * acc / static_cast<double>(fused.frames());
}

double loss_value(const FusedPosteriors& fused, const TargetAlignment& targets,
                  Loss loss, const FeatureMatrix* gamma_den, double kappa) {
  switch (loss) {
    case Loss::kCE:
      return ce_loss(fused, targets);
    case Loss::kMSE:
      return mse_loss(fused, targets);
    case Loss::kMMI:
    case Loss::kMM:
      if (gamma_den == nullptr) throw ConfigError("MMI loss needs denominator occupancies");
      return mmi_fixed_gamma_loss(fused, targets, *gamma_den, kappa);
  }
  return 0.0;
}

FeatureMatrix loss_grad_log_fused(const FusedPosteriors& fused,
                                  const TargetAlignment& targets, Loss loss,
                                  const FeatureMatrix* gamma_den, double kappa,
                                  double normalizer) {
  check_targets(fused, targets);
  const std::size_t n = fused.frames();
  const std::size_t s_count = fused.states();
  FeatureMatrix g(n, s_count);
  if (n == 0) return g;
  const bool mmi = loss == Loss::kMMI || loss == Loss::kMM;
  if (mmi && (gamma_den == nullptr || gamma_den->rows() != n ||
              gamma_den->cols() != s_count)) {
    throw ConfigError("MMI gradient needs denominator occupancies of matching shape");
  }
  const double inv_t = 1.0 / (normalizer > 0.0 ? normalizer : static_cast<double>(n));
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t s = 0; s < s_count; ++s) {
      const double target = static_cast<int>(s) == targets[t] ? 1.0 : 0.0;
      const double p = fused.probs()(t, s);
      double v = 0.0;
      switch (loss) {
        case Loss::kCE:
          v = -target * inv_t;
          break;
        case Loss::kMSE:
          v = 2.0 * (p - target) * p * inv_t / static_cast<double>(s_count);
          break;
        case Loss::kMMI:
        case Loss::kMM:
          v = -kappa * (target - (*gamma_den)(t, s)) * inv_t;
          break;
      }
      g(t, s) = v;
    }
  }
  return g;
}

FeatureMatrix grad_weights_from_log_fused(const StreamBundle& bundle,
                                          const FusedPosteriors& fused,
                                          const FeatureMatrix& grad_log_fused) {
  check_shapes(bundle, fused.frames(), "grad_weights");
  const std::size_t n = fused.frames();
  const std::size_t s_count = fused.states();
  FeatureMatrix out(n, kNumStreams);
  std::vector<double> gz(s_count);
  for (std::size_t t = 0; t < n; ++t) {
    auto g = grad_log_fused.row(t);
    auto p = fused.probs().row(t);
    double total = 0.0;
    for (double v : g) total += v;
    for (std::size_t s = 0; s < s_count; ++s) gz[s] = g[s] - p[s] * total;
    for (std::size_t i = 0; i < kNumStreams; ++i) {
      auto lp = bundle[i].log_probs().row(t);
      double acc = 0.0;
      for (std::size_t s = 0; s < s_count; ++s) acc += gz[s] * lp[s];
      out(t, i) = acc;
    }
  }
  return out;
}

FeatureMatrix loss_grad_weights(const StreamBundle& bundle,
                                const StreamWeights& weights,
                                const TargetAlignment& targets, Loss loss,
                                const FeatureMatrix* gamma_den, double kappa) {
  const FusedPosteriors fused = fuse(bundle, weights);
  const FeatureMatrix g = loss_grad_log_fused(fused, targets, loss, gamma_den, kappa);
  return grad_weights_from_log_fused(bundle, fused, g);
}

double frame_ce(const std::array<std::span<const double>, kNumStreams>& log_rows,
                int target, const std::array<double, kNumStreams>& w) {
  return frame_ce_grad(log_rows, target, w, nullptr);
}

OracleFrameResult solve_frame_oracle(
    const std::array<std::span<const double>, kNumStreams>& rows, int target,
    const OracleConfig& cfg, std::vector<double>* trace) {
  OracleFrameResult r;
  std::array<double, kNumStreams> w = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::array<double, kNumStreams> g{};
  double f = frame_ce_grad(rows, target, w, &g);
  r.initial_ce = f;
  if (trace != nullptr) trace->push_back(f);
  double step = cfg.step;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    // Stationarity: length of the projected-gradient step with unit size.
    std::array<double, kNumStreams> probe{};
    for (std::size_t i = 0; i < kNumStreams; ++i) probe[i] = w[i] - g[i];
    probe = project_box(probe);
    double pg = 0.0;
    for (std::size_t i = 0; i < kNumStreams; ++i) pg += (probe[i] - w[i]) * (probe[i] - w[i]);
    if (std::sqrt(pg) < cfg.tol) {
      r.converged = true;
      break;
    }
    bool accepted = false;
    std::array<double, kNumStreams> next{}, g_next{};
    double f_next = f;
    for (int bt = 0; bt < 80; ++bt) {
      for (std::size_t i = 0; i < kNumStreams; ++i) next[i] = w[i] - step * g[i];
      next = project_box(next);
      double decrease = 0.0;
      for (std::size_t i = 0; i < kNumStreams; ++i) decrease += g[i] * (next[i] - w[i]);
      f_next = frame_ce_grad(rows, target, next, &g_next);
      if (f_next <= f + cfg.armijo * decrease) {
        accepted = true;
        break;
      }
      step *= cfg.shrink;
    }
    r.iterations = it + 1;
    if (!accepted) {
      // No representable descent step left: the iterate is optimal up to
      // rounding.
      r.converged = true;
      if (trace != nullptr) trace->push_back(f);
      break;
    }
    w = next;
    g = g_next;
    f = f_next;
    if (trace != nullptr) trace->push_back(f);
    step = std::min(step * 2.0, 1e6);
  }
  r.weights = w;
  r.final_ce = f;
  return r;
}

std::size_t OracleSolveReport::num_converged() const {
  return static_cast<std::size_t>(std::count_if(
      frames.begin(), frames.end(), [](const OracleFrameResult& f) { return f.converged; }));
}

OracleResult oracle_weights(const StreamBundle& bundle,
                            const TargetAlignment& targets,
                            const OracleConfig& cfg) {
  check_shapes(bundle, targets.frames(), "oracle_weights");
  if (targets.num_states() != bundle.states()) {
    throw DimensionError("target state count does not match bundle");
  }
  const std::size_t n = bundle.frames();
  FeatureMatrix w(n, kNumStreams);
  OracleSolveReport report;
  report.frames.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::array<std::span<const double>, kNumStreams> rows = {
        bundle[0].log_probs().row(t), bundle[1].log_probs().row(t),
        bundle[2].log_probs().row(t)};
    OracleFrameResult fr = solve_frame_oracle(rows, targets[t], cfg);
    for (std::size_t i = 0; i < kNumStreams; ++i) w(t, i) = fr.weights[i];
    report.frames.push_back(fr);
  }
  return {StreamWeights(std::move(w)), std::move(report)};
}

std::string oracle_report_jsonl(const OracleSolveReport& report,
                                std::size_t frame_offset) {
  std::string out;
  for (std::size_t t = 0; t < report.frames.size(); ++t) {
    const auto& f = report.frames[t];
    nlohmann::ordered_json j;
    j["frame"] = frame_offset + t;
    j["ce"] = f.final_ce;
    j["iters"] = f.iterations;
    j["converged"] = f.converged;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace avfuse
