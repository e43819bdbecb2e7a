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

#include "avfuse/decode_score.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "avfuse/matrix_io.hpp"
#include "json.hpp"

namespace avfuse {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_graph(const FusedPosteriors& fused, const StateGraph& g) {
  if (fused.states() != g.num_states()) {
    throw DimensionError("posteriors have " + std::to_string(fused.states()) +
                         " states, graph " + std::to_string(g.num_states()));
  }
  if (fused.frames() == 0) throw DataError("cannot decode an empty utterance");
}

}  // namespace

StateGraph::StateGraph(std::vector<double> initial,
                       std::vector<std::vector<double>> transitions,
                       std::vector<std::string> labels, std::vector<bool> boundaries)
    : initial_(std::move(initial)),
      trans_(std::move(transitions)),
      labels_(std::move(labels)),
      boundaries_(std::move(boundaries)) {
  const std::size_t n = initial_.size();
  if (n == 0) throw DataError("state graph needs at least one state");
  if (trans_.size() != n || labels_.size() != n || boundaries_.size() != n) {
    throw DimensionError("state graph arrays disagree on the state count");
  }
  auto check_row = [](const std::vector<double>& row, const std::string& what) {
    double sum = 0.0;
    for (double p : row) {
      if (!std::isfinite(p) || p < 0.0) throw DataError(what + " has an invalid probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw DataError(what + " sums to " + std::to_string(sum) + ", not 1");
    }
  };
  check_row(initial_, "initial distribution");
  for (std::size_t s = 0; s < n; ++s) {
    if (trans_[s].size() != n) throw DimensionError("transition matrix is not square");
    check_row(trans_[s], "transition row " + std::to_string(s));
  }
  // Every state must be reachable from some initial state.
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < n; ++s) {
    if (initial_[s] > 0.0) {
      seen[s] = true;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const std::size_t s = queue.front();
    queue.pop_front();
    for (std::size_t d = 0; d < n; ++d) {
      if (!seen[d] && trans_[s][d] > 0.0) {
        seen[d] = true;
        queue.push_back(d);
      }
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!seen[s]) throw DataError("state " + std::to_string(s) + " is unreachable");
  }
  log_init_.resize(n);
  log_trans_.resize(n * n);
  for (std::size_t s = 0; s < n; ++s) {
    log_init_[s] = safe_log(initial_[s]);
    for (std::size_t d = 0; d < n; ++d) log_trans_[s * n + d] = safe_log(trans_[s][d]);
  }
}

std::vector<std::string> StateGraph::words(const std::vector<int>& path) const {
  std::vector<std::string> out;
  for (std::size_t t = 0; t < path.size(); ++t) {
    const auto s = static_cast<std::size_t>(path[t]);
    if (!boundaries_[s]) continue;
    if (t == 0 || path[t - 1] != path[t]) out.push_back(labels_[s]);
  }
  return out;
}

StateGraph StateGraph::Uniform(std::size_t n) {
  std::vector<double> init(n, 1.0 / static_cast<double>(n));
  std::vector<std::vector<double>> trans(n, init);
  std::vector<std::string> labels(n);
  for (std::size_t s = 0; s < n; ++s) labels[s] = "s" + std::to_string(s);
  return StateGraph(init, trans, labels, std::vector<bool>(n, true));
}

StateGraph parse_state_graph(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("state graph JSON: ") + e.what());
  }
  try {
    const auto n = j.at("num_states").get<std::size_t>();
    auto init = j.at("initial").get<std::vector<double>>();
    auto trans = j.at("transitions").get<std::vector<std::vector<double>>>();
    std::vector<std::string> labels;
    for (const auto& l : j.at("labels")) {
      labels.push_back(l.is_string() ? l.get<std::string>() : l.dump());
    }
    std::vector<bool> bounds;
    for (const auto& b : j.at("boundaries")) {
      bounds.push_back(b.is_boolean() ? b.get<bool>() : b.get<int>() != 0);
    }
    if (init.size() != n) throw DimensionError("state graph: num_states disagrees with initial");
    return StateGraph(std::move(init), std::move(trans), std::move(labels), std::move(bounds));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("state graph JSON: ") + e.what());
  }
}

StateGraph read_state_graph(const std::string& path) {
  try {
    return parse_state_graph(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string state_graph_to_json(const StateGraph& g) {
  nlohmann::ordered_json j;
  j["num_states"] = g.num_states();
  j["initial"] = g.initial();
  j["transitions"] = g.transitions();
  j["labels"] = g.labels();
  std::vector<int> b;
  for (bool v : g.boundaries()) b.push_back(v ? 1 : 0);
  j["boundaries"] = b;
  return j.dump(1);
}

DecodeResult viterbi(const FusedPosteriors& fused, const StateGraph& g,
                     double acoustic_scale) {
  check_graph(fused, g);
  const std::size_t n = fused.frames();
  const std::size_t s_count = g.num_states();
  std::vector<double> score(s_count), next(s_count);
  std::vector<int> back(n * s_count, -1);
  const auto& lp = fused.log_probs();
  for (std::size_t s = 0; s < s_count; ++s) {
    score[s] = g.log_initial(s) + acoustic_scale * lp(0, s);
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t d = 0; d < s_count; ++d) {
      double best = kNegInf;
      int arg = -1;
      for (std::size_t s = 0; s < s_count; ++s) {
        const double v = score[s] + g.log_transition(s, d);
        if (v > best) {
          best = v;
          arg = static_cast<int>(s);
        }
      }
      next[d] = best == kNegInf ? kNegInf : best + acoustic_scale * lp(t, d);
      back[t * s_count + d] = arg;
    }
    if (std::all_of(next.begin(), next.end(), [](double v) { return v == kNegInf; })) {
      throw DataError("no path through the graph at frame " + std::to_string(t));
    }
    score.swap(next);
  }
  auto best_it = std::max_element(score.begin(), score.end());
  if (*best_it == kNegInf) throw DataError("no path through the graph");
  DecodeResult r;
  r.score = *best_it;
  r.path.resize(n);
  r.path[n - 1] = static_cast<int>(best_it - score.begin());
  for (std::size_t t = n - 1; t > 0; --t) {
    r.path[t - 1] = back[t * s_count + static_cast<std::size_t>(r.path[t])];
  }
  r.words = g.words(r.path);
  return r;
}

double path_score(const FusedPosteriors& fused, const StateGraph& g,
                  const std::vector<int>& path, double acoustic_scale) {
  check_graph(fused, g);
  if (path.size() != fused.frames()) throw DimensionError("path length mismatch");
  double v = g.log_initial(static_cast<std::size_t>(path[0])) +
             acoustic_scale * fused.log_probs()(0, static_cast<std::size_t>(path[0]));
  for (std::size_t t = 1; t < path.size(); ++t) {
    const auto s = static_cast<std::size_t>(path[t]);
    v += g.log_transition(static_cast<std::size_t>(path[t - 1]), s) +
         acoustic_scale * fused.log_probs()(t, s);
  }
  return v;
}

ForwardBackwardResult forward_backward(const FusedPosteriors& fused,
                                       const StateGraph& g, double kappa) {
  check_graph(fused, g);
  const std::size_t n = fused.frames();
  const std::size_t s_count = g.num_states();
  const auto& lp = fused.log_probs();
  FeatureMatrix gamma(n, s_count);
  std::vector<double> alpha(n * s_count, kNegInf), beta(n * s_count, kNegInf);
  for (std::size_t s = 0; s < s_count; ++s) {
    alpha[s] = g.log_initial(s) + kappa * lp(0, s);
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t d = 0; d < s_count; ++d) {
      double acc = kNegInf;
      for (std::size_t s = 0; s < s_count; ++s) {
        acc = log_add(acc, alpha[(t - 1) * s_count + s] + g.log_transition(s, d));
      }
      alpha[t * s_count + d] = acc == kNegInf ? kNegInf : acc + kappa * lp(t, d);
    }
  }
  for (std::size_t s = 0; s < s_count; ++s) beta[(n - 1) * s_count + s] = 0.0;
  for (std::size_t t = n - 1; t > 0; --t) {
    for (std::size_t s = 0; s < s_count; ++s) {
      double acc = kNegInf;
      for (std::size_t d = 0; d < s_count; ++d) {
        acc = log_add(acc, g.log_transition(s, d) + kappa * lp(t, d) +
                               beta[t * s_count + d]);
      }
      beta[(t - 1) * s_count + s] = acc;
    }
  }
  double log_z = kNegInf;
  for (std::size_t s = 0; s < s_count; ++s) {
    log_z = log_add(log_z, alpha[(n - 1) * s_count + s]);
  }
  if (log_z == kNegInf) throw DataError("no path through the graph");
  for (std::size_t t = 0; t < n; ++t) {
    double norm = 0.0;
    for (std::size_t s = 0; s < s_count; ++s) {
      const double v = alpha[t * s_count + s] + beta[t * s_count + s] - log_z;
      gamma(t, s) = v == kNegInf ? 0.0 : std::exp(v);
      norm += gamma(t, s);
    }
    // Renormalize away accumulated rounding.
    for (std::size_t s = 0; s < s_count; ++s) gamma(t, s) /= norm;
  }
  return {std::move(gamma), log_z};
}

FeatureMatrix mmi_gradient(const FusedPosteriors& fused, const TargetAlignment& targets,
                           const FeatureMatrix& gamma_den, double kappa) {
  if (targets.frames() != fused.frames() || gamma_den.rows() != fused.frames() ||
      gamma_den.cols() != fused.states() || targets.num_states() != fused.states()) {
    throw DimensionError("mmi_gradient: shape mismatch");
  }
  FeatureMatrix g(fused.frames(), fused.states());
  for (std::size_t t = 0; t < fused.frames(); ++t) {
    for (std::size_t s = 0; s < fused.states(); ++s) {
      const double target = static_cast<int>(s) == targets[t] ? 1.0 : 0.0;
      g(t, s) = kappa * (target - gamma_den(t, s));
    }
  }
  return g;
}

MmiObjective mmi_objective(const FusedPosteriors& fused, const TargetAlignment& targets,
                           const StateGraph& g, double kappa) {
  if (targets.frames() != fused.frames()) throw DimensionError("mmi: target length mismatch");
  auto fb = forward_backward(fused, g, kappa);
  const double num = path_score(fused, g, targets.states(), kappa);
  if (num == kNegInf) {
    throw DataError("reference alignment uses a transition absent from the graph");
  }
  return {num - fb.log_partition, std::move(fb.gamma)};
}

WerResult wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw DataError("WER needs a non-empty reference");
  const std::size_t r = ref.size();
  const std::size_t h = hyp.size();
  std::vector<std::size_t> d((r + 1) * (h + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (h + 1) + j]; };
  for (std::size_t i = 0; i <= r; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= h; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= r; ++i) {
    for (std::size_t j = 1; j <= h; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }
  WerResult out;
  out.ref_words = r;
  std::size_t i = r, j = h;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++out.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++out.insertions;
      --j;
      continue;
    }
    ++out.deletions;
    --i;
  }
  out.wer = 100.0 * static_cast<double>(out.errors()) / static_cast<double>(r);
  return out;
}

double frame_error_rate(const std::vector<int>& path, const TargetAlignment& targets) {
  if (path.size() != targets.frames()) {
    throw DimensionError("frame_error_rate: path has " + std::to_string(path.size()) +
                         " frames, targets " + std::to_string(targets.frames()));
  }
  if (path.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t t = 0; t < path.size(); ++t) wrong += path[t] != targets[t] ? 1 : 0;
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(path.size());
}

std::string decode_result_json(const std::string& utterance_id, const DecodeResult& r) {
  nlohmann::ordered_json j;
  j["utterance"] = utterance_id;
  j["score"] = r.score;
  j["words"] = r.words;
  j["path"] = r.path;
  return j.dump();
}

}  // namespace avfuse
