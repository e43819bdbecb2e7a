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

// avfuse: command-line front end for the stream-weighting experiments.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "avfuse/errors.hpp"
#include "avfuse/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string loss;
  std::string snr;
  std::string out;
  std::string corpus;
  bool force = false;
};

void add_common(CLI::App* cmd, Flags& f, bool with_corpus) {
  cmd->add_option("--config", f.config, "TOML-style key = value config file");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--loss", f.loss, "training loss: ce, mse, mmi or mm");
  cmd->add_option("--snr", f.snr, "comma separated SNR list in dB, 'clean' allowed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--force", f.force, "write into a non-empty directory");
  if (with_corpus) cmd->add_option("--corpus", f.corpus, "corpus directory");
}

avfuse::ExperimentConfig resolve(const Flags& f) {
  avfuse::ExperimentConfig cfg =
      f.config.empty() ? avfuse::parse_experiment_config("") : avfuse::load_experiment_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.loss.empty()) cfg.losses = {avfuse::parse_loss(f.loss)};
  if (!f.snr.empty()) {
    cfg.snr_list = avfuse::parse_snr_list(f.snr);
    cfg.synth.snr_list = cfg.snr_list;
  }
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.corpus.empty()) cfg.corpus_dir = f.corpus;
  cfg.force = f.force;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avfuse: dynamic stream weighting for audio-visual recognition"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus into --out");
  add_common(synth, f, false);
  auto* extract = app.add_subcommand("extract", "compute 43-dim reliability features");
  add_common(extract, f, true);
  auto* train = app.add_subcommand("train", "train integration nets");
  add_common(train, f, true);
  auto* oracle = app.add_subcommand("oracle", "solve oracle weights on eval data");
  add_common(oracle, f, true);
  auto* fuse = app.add_subcommand("fuse", "write per-system stream weights");
  add_common(fuse, f, true);
  auto* decode = app.add_subcommand("decode", "Viterbi-decode every fused system");
  add_common(decode, f, true);
  auto* score = app.add_subcommand("score", "write WER and CE tables");
  add_common(score, f, true);
  auto* run = app.add_subcommand("run", "full pipeline from extraction to scoring");
  add_common(run, f, true);
  auto* rep = app.add_subcommand("report", "print tables and relative reductions of --out");
  add_common(rep, f, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const avfuse::ExperimentConfig cfg = resolve(f);
    if (synth->parsed()) {
      const std::string dir = f.out.empty() ? cfg.corpus_dir : f.out;
      avfuse::synth_generate(cfg.synth, cfg.seed, dir, cfg.force);
      std::cout << "wrote corpus to " << dir << "\n";
    } else if (rep->parsed()) {
      std::cout << avfuse::report(cfg.out_dir);
    } else if (run->parsed()) {
      avfuse::run_experiment(cfg);
      std::cout << avfuse::report(cfg.out_dir);
    } else {
      const avfuse::Corpus corpus = avfuse::Corpus::Load(cfg.corpus_dir);
      if (extract->parsed()) avfuse::extract_stage(cfg, corpus);
      if (oracle->parsed()) avfuse::oracle_stage(cfg, corpus);
      if (train->parsed()) avfuse::train_stage(cfg, corpus);
      if (fuse->parsed()) avfuse::fuse_stage(cfg, corpus);
      if (decode->parsed()) avfuse::decode_stage(cfg, corpus);
      if (score->parsed()) avfuse::score_stage(cfg, corpus);
    }
  } catch (const avfuse::Error& e) {
    std::cerr << "avfuse: " << e.what() << "\n";
    switch (e.kind()) {
      case avfuse::ErrorKind::kConfig:
        return kExitConfig;
      case avfuse::ErrorKind::kData:
        return kExitData;
      case avfuse::ErrorKind::kNumerical:
        return kExitNumerical;
    }
  } catch (const std::exception& e) {
    std::cerr << "avfuse: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
