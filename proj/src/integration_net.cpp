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

#include "avfuse/integration_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "avfuse/matrix_io.hpp"
#include "json.hpp"

namespace avfuse {
namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// Activations of every layer for a batch; acts[0] is the normalized input.
struct ForwardCache {
  std::vector<FeatureMatrix> acts;
};

ForwardCache forward(const IntegrationNet& net, const FeatureMatrix& x) {
  if (x.cols() != net.input_dim()) {
    throw DimensionError("reliability input has " + std::to_string(x.cols()) +
                         " columns, net expects " + std::to_string(net.input_dim()));
  }
  ForwardCache c;
  const std::size_t n = x.rows();
  FeatureMatrix in(n, x.cols());
  const auto& off = net.input_offset();
  const auto& sc = net.input_scale();
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < x.cols(); ++j) in(t, j) = (x(t, j) - off[j]) * sc[j];
  }
  c.acts.push_back(std::move(in));
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& L = layers[l];
    const FeatureMatrix& h = c.acts.back();
    const std::size_t out_dim = L.weights.rows();
    const std::size_t in_dim = L.weights.cols();
    const bool last = l + 1 == layers.size();
    FeatureMatrix a(n, out_dim);
    for (std::size_t t = 0; t < n; ++t) {
      auto hr = h.row(t);
      for (std::size_t o = 0; o < out_dim; ++o) {
        auto wr = L.weights.row(o);
        double acc = L.bias[o];
        for (std::size_t i = 0; i < in_dim; ++i) acc += wr[i] * hr[i];
        a(t, o) = last ? sigmoid(acc) : std::max(acc, 0.0);
      }
    }
    c.acts.push_back(std::move(a));
  }
  return c;
}

std::vector<double> backward(const IntegrationNet& net, const ForwardCache& c,
                             const FeatureMatrix& grad_out) {
  const auto& layers = net.layers();
  const std::size_t n = grad_out.rows();
  std::vector<double> grad(net.num_parameters(), 0.0);
  // Parameter offsets per layer.
  std::vector<std::size_t> offsets(layers.size());
  std::size_t pos = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = pos;
    pos += layers[l].weights.rows() * layers[l].weights.cols() + layers[l].bias.size();
  }
  // delta = dL/d(pre-activation) of the current layer.
  FeatureMatrix delta(n, grad_out.cols());
  const FeatureMatrix& out = c.acts.back();
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t o = 0; o < grad_out.cols(); ++o) {
      const double y = out(t, o);
      delta(t, o) = grad_out(t, o) * y * (1.0 - y);
    }
  }
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& L = layers[l];
    const FeatureMatrix& h = c.acts[l];
    const std::size_t out_dim = L.weights.rows();
    const std::size_t in_dim = L.weights.cols();
    double* gw = grad.data() + offsets[l];
    double* gb = gw + out_dim * in_dim;
    for (std::size_t t = 0; t < n; ++t) {
      auto hr = h.row(t);
      auto dr = delta.row(t);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        double* row = gw + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) row[i] += d * hr[i];
        gb[o] += d;
      }
    }
    if (l == 0) break;
    FeatureMatrix prev(n, in_dim);
    for (std::size_t t = 0; t < n; ++t) {
      auto dr = delta.row(t);
      auto hr = h.row(t);
      auto pr = prev.row(t);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        auto wr = L.weights.row(o);
        for (std::size_t i = 0; i < in_dim; ++i) pr[i] += d * wr[i];
      }
      // ReLU derivative: the stored activation is zero exactly where the
      // pre-activation was non-positive.
      for (std::size_t i = 0; i < in_dim; ++i) {
        if (hr[i] <= 0.0) pr[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return grad;
}

// Gathers the given (utterance, frame) pairs into one pseudo-utterance.
TrainUtterance gather_frames(const std::vector<TrainUtterance>& data,
                             const std::vector<std::pair<std::size_t, std::size_t>>& idx) {
  const std::size_t n = idx.size();
  const std::size_t dim = data.front().reliability.cols();
  const std::size_t s_count = data.front().bundle.states();
  FeatureMatrix rel(n, dim);
  std::array<FeatureMatrix, kNumStreams> logs = {
      FeatureMatrix(n, s_count), FeatureMatrix(n, s_count), FeatureMatrix(n, s_count)};
  std::vector<int> targets(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& u = data[idx[k].first];
    const std::size_t t = idx[k].second;
    auto r = u.reliability.row(t);
    std::copy(r.begin(), r.end(), rel.row(k).begin());
    for (std::size_t i = 0; i < kNumStreams; ++i) {
      auto lp = u.bundle[i].log_probs().row(t);
      std::copy(lp.begin(), lp.end(), logs[i].row(k).begin());
    }
    targets[k] = u.targets[t];
  }
  return TrainUtterance{
      "batch", std::move(rel),
      StreamBundle(PosteriorStream::FromLog(logs[0]), PosteriorStream::FromLog(logs[1]),
                   PosteriorStream::FromLog(logs[2])),
      TargetAlignment(std::move(targets), s_count)};
}

std::string describe_batch(const std::vector<const TrainUtterance*>& batch) {
  std::ostringstream os;
  os << "offending batch:";
  for (const auto* u : batch) {
    os << " " << u->id << " (" << u->reliability.rows() << " frames";
    if (u->reliability.rows() > 0) {
      os << ", first reliability row:";
      for (double v : u->reliability.row(0)) os << " " << v;
    }
    os << ")";
  }
  return os.str();
}

}  // namespace

IntegrationNet::IntegrationNet(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ConfigError("net needs at least input and output sizes");
  for (std::size_t d : dims_) {
    if (d == 0) throw ConfigError("net layer size must be positive");
  }
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    layers_.push_back({FeatureMatrix(dims_[l + 1], dims_[l]),
                       std::vector<double>(dims_[l + 1], 0.0)});
  }
  offset_.assign(dims_.front(), 0.0);
  scale_.assign(dims_.front(), 1.0);
}

void IntegrationNet::fit_input_normalization(const FeatureMatrix& x) {
  if (x.cols() != input_dim()) throw DimensionError("normalization data has wrong width");
  if (x.rows() == 0) return;
  const double n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < x.rows(); ++t) mean += x(t, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t t = 0; t < x.rows(); ++t) var += (x(t, j) - mean) * (x(t, j) - mean);
    var /= n;
    offset_[j] = mean;
    scale_[j] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
}

std::size_t IntegrationNet::num_parameters() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += L.weights.rows() * L.weights.cols() + L.bias.size();
  return n;
}

std::vector<double> IntegrationNet::parameters() const {
  std::vector<double> p;
  p.reserve(num_parameters());
  for (const auto& L : layers_) {
    p.insert(p.end(), L.weights.data().begin(), L.weights.data().end());
    p.insert(p.end(), L.bias.begin(), L.bias.end());
  }
  return p;
}

void IntegrationNet::set_parameters(std::span<const double> p) {
  if (p.size() != num_parameters()) throw DimensionError("parameter vector has wrong length");
  std::size_t pos = 0;
  for (auto& L : layers_) {
    auto w = L.weights.data();
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(pos), w.size(), w.begin());
    pos += w.size();
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(pos), L.bias.size(), L.bias.begin());
    pos += L.bias.size();
  }
}

bool operator==(const IntegrationNet& a, const IntegrationNet& b) {
  return a.dims_ == b.dims_ && a.parameters() == b.parameters() &&
         a.offset_ == b.offset_ && a.scale_ == b.scale_;
}

IntegrationNet net_init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  if (dims.size() < 2 || dims.back() != kNumStreams) {
    throw ConfigError("net dims must run from the reliability dimension to 3 outputs");
  }
  IntegrationNet net(dims);
  std::mt19937_64 rng(seed);
  for (auto& L : net.layers()) {
    const double fan = static_cast<double>(L.weights.rows() + L.weights.cols());
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / fan), std::sqrt(6.0 / fan));
    for (double& w : L.weights.data()) w = u(rng);
  }
  return net;
}

StreamWeights predict_weights(const IntegrationNet& net, const FeatureMatrix& reliability) {
  ForwardCache c = forward(net, reliability);
  return StreamWeights(std::move(c.acts.back()));
}

std::vector<double> backprop_weights_grad(const IntegrationNet& net,
                                          const FeatureMatrix& reliability,
                                          const FeatureMatrix& grad_weights) {
  const ForwardCache c = forward(net, reliability);
  if (grad_weights.rows() != reliability.rows() || grad_weights.cols() != kNumStreams) {
    throw DimensionError("weight gradient shape does not match the batch");
  }
  return backward(net, c, grad_weights);
}

LossAndGrad evaluate_loss_and_grad(const IntegrationNet& net,
                                   const std::vector<const TrainUtterance*>& batch,
                                   Loss loss, const StateGraph* graph,
                                   const std::vector<FeatureMatrix>* gamma_den,
                                   double kappa) {
  LossAndGrad out;
  out.grad.assign(net.num_parameters(), 0.0);
  for (const auto* u : batch) out.frames += u->reliability.rows();
  if (out.frames == 0) return out;
  const double total = static_cast<double>(out.frames);
  const bool mmi = loss == Loss::kMMI || loss == Loss::kMM;
  if (mmi && gamma_den == nullptr && graph == nullptr) {
    throw ConfigError("MMI training needs a denominator graph");
  }
  if (gamma_den != nullptr && gamma_den->size() != batch.size()) {
    throw DimensionError("need one gamma_den matrix per utterance");
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainUtterance& u = *batch[b];
    if (u.reliability.rows() != u.bundle.frames() || u.targets.frames() != u.bundle.frames()) {
      throw DimensionError("utterance " + u.id + ": reliability/posterior/target lengths differ");
    }
    const ForwardCache c = forward(net, u.reliability);
    const StreamWeights w(c.acts.back());
    const FusedPosteriors fused = fuse(u.bundle, w);
    const double frames = static_cast<double>(u.bundle.frames());
    FeatureMatrix g_log;
    if (!mmi) {
      out.loss += loss_value(fused, u.targets, loss) * frames / total;
      g_log = loss_grad_log_fused(fused, u.targets, loss, nullptr, kappa, total);
    } else if (gamma_den != nullptr) {
      const FeatureMatrix& gd = (*gamma_den)[b];
      out.loss += mmi_fixed_gamma_loss(fused, u.targets, gd, kappa) * frames / total;
      g_log = loss_grad_log_fused(fused, u.targets, Loss::kMMI, &gd, kappa, total);
    } else {
      const MmiObjective obj = mmi_objective(fused, u.targets, *graph, kappa);
      out.loss -= obj.value / total;
      g_log = loss_grad_log_fused(fused, u.targets, Loss::kMMI, &obj.gamma, kappa, total);
    }
    const FeatureMatrix g_w = grad_weights_from_log_fused(u.bundle, fused, g_log);
    const auto g = backward(net, c, g_w);
    for (std::size_t k = 0; k < g.size(); ++k) out.grad[k] += g[k];
  }
  return out;
}

TrainResult run_optimizer(IntegrationNet net, const BatchObjective& objective,
                          const TrainConfig& cfg, Loss stage_loss) {
  if (cfg.patience == 0) throw ConfigError("patience must be at least 1");
  TrainResult res;
  TrainStage stage;
  stage.loss = stage_loss;
  std::vector<double> params = net.parameters();
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
  std::vector<double> best_params = params;
  double best = 0.0;
  std::size_t stall = 0;
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    net.set_parameters(params);
    const LossAndGrad lg = objective(net, it);
    if (!std::isfinite(lg.loss)) {
      throw NumericalError("non-finite " + loss_name(stage_loss) + " loss at iteration " +
                           std::to_string(it));
    }
    res.report.trace.push_back(lg.loss);
    if (it == 0) {
      best = lg.loss;
      best_params = params;
      stage.best_iteration = 0;
      stall = 1;
    } else if (lg.loss < best) {
      best = lg.loss;
      best_params = params;
      stage.best_iteration = it;
      stall = 0;
    } else {
      ++stall;
    }
    stage.iterations = it + 1;
    if (stall >= cfg.patience) {
      stage.stop = StopReason::kPatience;
      break;
    }
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double g = lg.grad[k];
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient at iteration " + std::to_string(it));
      }
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double mh = m[k] / (1.0 - b1t);
      const double vh = v[k] / (1.0 - b2t);
      params[k] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
    }
  }
  net.set_parameters(best_params);
  stage.best_loss = best;
  res.net = std::move(net);
  res.report.stages.push_back(stage);
  res.report.best_iteration = stage.best_iteration;
  res.report.best_loss = best;
  res.report.stop = stage.stop;
  return res;
}

namespace {

TrainResult train_stage(IntegrationNet net, const std::vector<TrainUtterance>& data,
                        const TrainConfig& cfg, Loss loss, const StateGraph* graph,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const bool mmi = loss == Loss::kMMI;
  std::vector<const TrainUtterance*> last_batch;
  BatchObjective objective;
  if (!mmi) {
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t u = 0; u < data.size(); ++u) {
      for (std::size_t t = 0; t < data[u].reliability.rows(); ++t) pool.emplace_back(u, t);
    }
    if (pool.empty()) throw DataError("no training frames");
    auto cursor = std::make_shared<std::size_t>(pool.size());
    auto order = std::make_shared<std::vector<std::pair<std::size_t, std::size_t>>>(pool);
    auto batch_store = std::make_shared<TrainUtterance>(gather_frames(data, {pool.front()}));
    objective = [&, cursor, order, batch_store](const IntegrationNet& n, std::size_t) {
      const std::size_t bs = std::min(cfg.batch_frames, order->size());
      if (*cursor + bs > order->size()) {
        std::shuffle(order->begin(), order->end(), rng);
        *cursor = 0;
      }
      std::vector<std::pair<std::size_t, std::size_t>> idx(
          order->begin() + static_cast<std::ptrdiff_t>(*cursor),
          order->begin() + static_cast<std::ptrdiff_t>(*cursor + bs));
      *cursor += bs;
      *batch_store = gather_frames(data, idx);
      last_batch = {batch_store.get()};
      return evaluate_loss_and_grad(n, last_batch, loss, nullptr, nullptr, cfg.kappa);
    };
  } else {
    if (graph == nullptr) throw ConfigError("MMI training needs a denominator graph");
    auto order = std::make_shared<std::vector<std::size_t>>(data.size());
    std::iota(order->begin(), order->end(), 0);
    auto cursor = std::make_shared<std::size_t>(data.size());
    objective = [&, cursor, order](const IntegrationNet& n, std::size_t) {
      const std::size_t bs = std::min(cfg.batch_utterances, order->size());
      if (*cursor + bs > order->size()) {
        std::shuffle(order->begin(), order->end(), rng);
        *cursor = 0;
      }
      last_batch.clear();
      for (std::size_t k = 0; k < bs; ++k) last_batch.push_back(&data[(*order)[*cursor + k]]);
      *cursor += bs;
      return evaluate_loss_and_grad(n, last_batch, Loss::kMMI, graph, nullptr, cfg.kappa);
    };
  }
  try {
    return run_optimizer(std::move(net), objective, cfg, loss);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + "; " + describe_batch(last_batch));
  }
}

}  // namespace

TrainResult train(IntegrationNet net, const std::vector<TrainUtterance>& data,
                  const TrainConfig& cfg, const StateGraph* graph) {
  if (data.empty()) throw DataError("training set is empty");
  FeatureMatrix all(0, net.input_dim());
  {
    std::vector<double> rows;
    std::size_t n = 0;
    for (const auto& u : data) {
      rows.insert(rows.end(), u.reliability.data().begin(), u.reliability.data().end());
      n += u.reliability.rows();
    }
    all = FeatureMatrix(n, net.input_dim(), std::move(rows));
  }
  net.fit_input_normalization(all);

  if (cfg.loss != Loss::kMM) {
    return train_stage(std::move(net), data, cfg, cfg.loss, graph, cfg.seed);
  }
  // MMI pre-training, then MSE fine-tuning from the best MMI parameters.
  TrainResult pre = train_stage(std::move(net), data, cfg, Loss::kMMI, graph, cfg.seed);
  TrainConfig fine = cfg;
  if (cfg.finetune_iterations > 0) fine.max_iterations = cfg.finetune_iterations;
  TrainResult post = train_stage(std::move(pre.net), data, fine, Loss::kMSE, nullptr,
                                 cfg.seed + 1);
  TrainResult out;
  out.net = std::move(post.net);
  out.report.trace = pre.report.trace;
  out.report.stages = pre.report.stages;
  TrainStage s2 = post.report.stages.front();
  s2.first_iteration = pre.report.trace.size();
  s2.best_iteration += s2.first_iteration;
  out.report.trace.insert(out.report.trace.end(), post.report.trace.begin(),
                          post.report.trace.end());
  out.report.stages.push_back(s2);
  out.report.best_iteration = s2.best_iteration;
  out.report.best_loss = s2.best_loss;
  out.report.stop = s2.stop;
  return out;
}

std::string train_log_csv(const TrainReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,loss,best_so_far\n";
  double best = 0.0;
  std::size_t stage = 0;
  for (std::size_t i = 0; i < report.trace.size(); ++i) {
    while (stage + 1 < report.stages.size() &&
           i >= report.stages[stage + 1].first_iteration) {
      ++stage;
    }
    const bool stage_start = i == (report.stages.empty() ? 0 : report.stages[stage].first_iteration);
    if (stage_start || report.trace[i] < best) best = report.trace[i];
    os << i << "," << report.trace[i] << "," << best << "\n";
  }
  return os.str();
}

std::string net_to_json(const IntegrationNet& net) {
  nlohmann::ordered_json j;
  j["format_version"] = kNetFormatVersion;
  j["dims"] = net.dims();
  j["input_offset"] = net.input_offset();
  j["input_scale"] = net.input_scale();
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& L : net.layers()) {
    nlohmann::ordered_json lj;
    std::vector<std::vector<double>> w(L.weights.rows());
    for (std::size_t o = 0; o < L.weights.rows(); ++o) {
      auto r = L.weights.row(o);
      w[o].assign(r.begin(), r.end());
    }
    lj["weights"] = w;
    lj["bias"] = L.bias;
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j.dump();
}

IntegrationNet net_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("model JSON parse error: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kNetFormatVersion) {
      throw FormatError("model format_version " + std::to_string(version) +
                        " is not supported (expected " +
                        std::to_string(kNetFormatVersion) + ")");
    }
    IntegrationNet net(j.at("dims").get<std::vector<std::size_t>>());
    const auto& layers = j.at("layers");
    if (layers.size() != net.layers().size()) {
      throw DimensionError("model has " + std::to_string(layers.size()) +
                           " layers but dims imply " + std::to_string(net.layers().size()));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& L = net.layers()[l];
      const auto w = layers[l].at("weights").get<std::vector<std::vector<double>>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      if (w.size() != L.weights.rows() || b.size() != L.bias.size()) {
        throw DimensionError("layer " + std::to_string(l) + " shape does not match dims");
      }
      for (std::size_t o = 0; o < w.size(); ++o) {
        if (w[o].size() != L.weights.cols()) {
          throw DimensionError("layer " + std::to_string(l) + " shape does not match dims");
        }
        std::copy(w[o].begin(), w[o].end(), L.weights.row(o).begin());
      }
      L.bias = b;
    }
    net.input_offset() = j.at("input_offset").get<std::vector<double>>();
    net.input_scale() = j.at("input_scale").get<std::vector<double>>();
    if (net.input_offset().size() != net.input_dim() ||
        net.input_scale().size() != net.input_dim()) {
      throw DimensionError("input normalization does not match the input dimension");
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }
}

void save_net(const IntegrationNet& net, const std::string& path) {
  write_file_bytes(path, net_to_json(net));
}

IntegrationNet load_net(const std::string& path) {
  return net_from_json(read_file_bytes(path));
}

}  // namespace avfuse
