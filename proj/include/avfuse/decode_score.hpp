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

// A small HMM back end: Viterbi decoding over fused posteriors, exact
// forward-backward occupancies for the MMI criterion, and WER scoring.
//
// Posteriors are used as emission scores directly (no division by state
// priors).

#ifndef AVFUSE_DECODE_SCORE_HPP_
#define AVFUSE_DECODE_SCORE_HPP_

#include <string>
#include <vector>

#include "avfuse/core.hpp"
#include "avfuse/fusion.hpp"

namespace avfuse {

/// Probability-domain HMM topology. `labels[s]` names the word state s
/// belongs to; `boundaries[s]` marks a word-initial state.
class StateGraph {
 public:
  StateGraph(std::vector<double> initial, std::vector<std::vector<double>> transitions,
             std::vector<std::string> labels, std::vector<bool> boundaries);

  std::size_t num_states() const { return initial_.size(); }
  const std::vector<double>& initial() const { return initial_; }
  const std::vector<std::vector<double>>& transitions() const { return trans_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<bool>& boundaries() const { return boundaries_; }

  double log_initial(std::size_t s) const { return log_init_[s]; }
  double log_transition(std::size_t from, std::size_t to) const {
    return log_trans_[from * num_states() + to];
  }

  /// Words read off a state path: one word each time the path enters a
  /// word-initial state (or starts in one).
  std::vector<std::string> words(const std::vector<int>& path) const;

  /// Fully connected graph with uniform initial and transition
  /// probabilities; each state is its own word.
  static StateGraph Uniform(std::size_t num_states);

 private:
  std::vector<double> initial_;
  std::vector<std::vector<double>> trans_;
  std::vector<std::string> labels_;
  std::vector<bool> boundaries_;
  std::vector<double> log_init_;
  std::vector<double> log_trans_;
};

/// JSON: {num_states, initial, transitions, labels, boundaries}.
StateGraph parse_state_graph(const std::string& json_text);
StateGraph read_state_graph(const std::string& path);
std::string state_graph_to_json(const StateGraph& g);

struct DecodeResult {
  std::vector<int> path;
  std::vector<std::string> words;
  double score = 0.0;
};

/// Best path under acoustic_scale * log p~ plus log transitions and initial
/// probabilities. Ties go to the lower state index.
DecodeResult viterbi(const FusedPosteriors& fused, const StateGraph& graph,
                     double acoustic_scale = 1.0);

/// Score of an explicit path under the same model as viterbi.
double path_score(const FusedPosteriors& fused, const StateGraph& graph,
                  const std::vector<int>& path, double acoustic_scale = 1.0);

struct ForwardBackwardResult {
  FeatureMatrix gamma;        // T x S state occupancies
  double log_partition = 0.0; // log of the sum over all paths
};

ForwardBackwardResult forward_backward(const FusedPosteriors& fused,
                                       const StateGraph& graph, double kappa = 1.0);

/// kappa (p* - gamma_den), elementwise.
FeatureMatrix mmi_gradient(const FusedPosteriors& fused, const TargetAlignment& targets,
                           const FeatureMatrix& gamma_den, double kappa = 1.0);

struct MmiObjective {
  double value = 0.0;  // log P(reference path) - log sum over all paths
  FeatureMatrix gamma; // denominator occupancies
};

/// Utterance-level MMI objective: the reference alignment path score minus
/// the log-partition over the denominator graph. Its gradient with respect
/// to log p~ is kappa (p* - gamma).
MmiObjective mmi_objective(const FusedPosteriors& fused, const TargetAlignment& targets,
                           const StateGraph& graph, double kappa = 1.0);

struct WerResult {
  double wer = 0.0;  // percent
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

/// Levenshtein alignment with unit costs. When several alignments are
/// optimal the backtrace prefers substitution, then insertion, then deletion.
WerResult wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

/// Percentage of frames whose decoded state differs from the target.
double frame_error_rate(const std::vector<int>& path, const TargetAlignment& targets);

/// One JSON line per utterance for decode outputs.
std::string decode_result_json(const std::string& utterance_id, const DecodeResult& r);

}  // namespace avfuse

#endif  // AVFUSE_DECODE_SCORE_HPP_
