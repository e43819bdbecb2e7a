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

// Experiment harness: synthetic corpus generation and the
// extract -> oracle -> train -> fuse -> decode -> score pipeline.
//
// Corpus directory layout:
//   manifest.json              utterance ids, splits, frame offsets
//   graph.json                 decoding graph
//   targets.avsf               stacked reference states (one column)
//   posteriors_A_<cond>.avsf   audio posteriors per SNR condition
//   posteriors_VA.avsf, posteriors_VS.avsf
//   audio_rel_<cond>.avsf      14 raw audio reliability columns, 100 fps
//   video_rel.avsf             8 raw video reliability columns, 25 fps
//
// Run directory layout:
//   reliability/<cond>.avsf, reliability/slots.txt
//   oracle/report_<cond>.jsonl
//   models/net_<loss>.json, models/train_log_<loss>.csv
//   weights/<system>_<cond>.avsf   eval frames only
//   decode/<system>_<cond>.jsonl   eval utterances only
//   wer_table.csv, ce_table.csv

#ifndef AVFUSE_HARNESS_HPP_
#define AVFUSE_HARNESS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avfuse/audio_dsp.hpp"
#include "avfuse/core.hpp"
#include "avfuse/decode_score.hpp"
#include "avfuse/fusion.hpp"
#include "avfuse/integration_net.hpp"
#include "avfuse/reliability.hpp"

namespace avfuse {

/// Condition label for an SNR in dB; infinity is "clean".
std::string condition_label(double snr_db);
/// Comma separated list of SNRs; accepts "clean" and optional brackets.
std::vector<double> parse_snr_list(const std::string& text);

struct SyntheticSpec {
  std::size_t n_utterances = 1400;
  std::size_t min_frames = 40;
  std::size_t max_frames = 120;
  std::size_t num_words = 4;
  std::size_t states_per_word = 2;
  double self_loop = 0.8;
  std::size_t min_state_frames = 3;
  std::size_t max_state_frames = 8;
  std::vector<double> snr_list = {-9, -6, -3, 0, 3, 6, 9, kCleanSnr};
  double clean_corruption = 0.02;    // audio corruption without noise
  double snr_slope_db = 3.0;         // audio corruption 1 / (1 + e^(snr / slope))
  double audio_fluctuation = 0.7;    // std of the logit-domain audio wobble
  double video_min = 0.1;            // video corruption ~ U(video_min, video_max)
  double video_max = 1.0;
  std::size_t video_min_run = 2;     // piecewise-constant runs at 25 fps
  std::size_t video_max_run = 8;
  double noise_temperature = 0.3;
  double train_fraction = 0.70;
  double dev_fraction = 0.15;

  std::size_t num_states() const { return num_words * states_per_word; }
  void validate() const;
};

StateGraph synthetic_graph(const SyntheticSpec& spec);

/// Writes a corpus to `dir`. Refuses a non-empty directory unless `force`.
void synth_generate(const SyntheticSpec& spec, std::uint64_t seed, const std::string& dir,
                    bool force);

enum class Split { kTrain, kDev, kEval };
std::string split_name(Split s);

struct UtteranceInfo {
  std::string id;
  Split split = Split::kTrain;
  std::size_t frames = 0;
  std::size_t offset = 0;        // row offset in the 100 fps stacked files
  std::size_t video_frames = 0;
  std::size_t video_offset = 0;  // row offset in video_rel.avsf
};

/// A corpus loaded into memory.
class Corpus {
 public:
  static Corpus Load(const std::string& dir);

  const std::string& dir() const { return dir_; }
  const std::vector<UtteranceInfo>& utterances() const { return utts_; }
  const std::vector<std::string>& conditions() const { return conditions_; }
  const StateGraph& graph() const { return *graph_; }
  std::size_t num_states() const { return graph_->num_states(); }
  std::size_t total_frames() const { return total_frames_; }
  std::uint64_t seed() const { return seed_; }

  bool has_condition(const std::string& cond) const;
  StreamBundle bundle(std::size_t u, const std::string& cond) const;
  TargetAlignment targets(std::size_t u) const;
  FeatureMatrix audio_reliability(std::size_t u, const std::string& cond) const;
  FeatureMatrix video_reliability(std::size_t u) const;  // 25 fps
  std::vector<std::size_t> split_indices(Split s) const;

 private:
  std::string dir_;
  std::vector<UtteranceInfo> utts_;
  std::vector<std::string> conditions_;
  std::optional<StateGraph> graph_;
  std::size_t total_frames_ = 0;
  std::uint64_t seed_ = 0;
  std::map<std::string, FeatureMatrix> post_a_;
  std::map<std::string, FeatureMatrix> audio_rel_;
  FeatureMatrix post_va_;
  FeatureMatrix post_vs_;
  FeatureMatrix video_rel_;
  std::vector<int> targets_;
};

/// Parsed TOML-style text: "section.key" -> raw value text.
using ConfigMap = std::map<std::string, std::string>;
ConfigMap parse_config_text(const std::string& text);

struct ExperimentConfig {
  std::string corpus_dir = "corpus";
  std::string out_dir = "run";
  std::vector<double> snr_list = {-9, -6, -3, 0, 3, 6, 9, kCleanSnr};
  std::vector<Loss> losses = {Loss::kMSE, Loss::kCE, Loss::kMMI, Loss::kMM};
  ReliabilityConfig reliability{.clamp_k = true};  // synthetic graphs have S < K
  std::vector<std::size_t> net_dims = kDefaultNetDims;
  TrainConfig train;
  OracleConfig oracle;
  SyntheticSpec synth;
  std::uint64_t seed = 1;
  bool force = false;

  std::vector<std::string> conditions() const;
  void validate() const;
};

/// Defaults overridden by the keys in `text`. Unknown keys are an error.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Fusion systems in table order.
inline const std::vector<std::string> kSystems = {"A",  "VA",  "VS", "EqualFixed", "OW",
                                                  "MSE", "CE", "MMI", "MM"};

void extract_stage(const ExperimentConfig& cfg, const Corpus& corpus);
void oracle_stage(const ExperimentConfig& cfg, const Corpus& corpus);
void train_stage(const ExperimentConfig& cfg, const Corpus& corpus);
void fuse_stage(const ExperimentConfig& cfg, const Corpus& corpus);
void decode_stage(const ExperimentConfig& cfg, const Corpus& corpus);
void score_stage(const ExperimentConfig& cfg, const Corpus& corpus);

/// All stages in order.
void run_experiment(const ExperimentConfig& cfg);

/// Parsed wer_table.csv / ce_table.csv.
struct ResultTable {
  std::vector<std::string> columns;  // condition labels, then "avg"
  std::vector<std::string> systems;
  std::vector<std::vector<double>> values;

  double at(const std::string& system, const std::string& column) const;
  bool has_system(const std::string& system) const;
};
ResultTable parse_result_table(const std::string& csv_text);

/// Human-readable summary of a run directory. Throws DataError listing the
/// absent files when the tables are missing.
std::string report(const std::string& out_dir);

}  // namespace avfuse

#endif  // AVFUSE_HARNESS_HPP_
