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

#include "avfuse/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "avfuse/matrix_io.hpp"
#include "avfuse/sync.hpp"
#include "avfuse/video_features.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace avfuse {
namespace {

constexpr std::uint32_t kPosteriorRate = 100;
constexpr std::uint32_t kVideoRate = 25;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string text) {
  text = trim(text);
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') throw ConfigError("unterminated list: " + text);
    text = text.substr(1, text.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.size() >= 2 && item.front() == '"' && item.back() == '"') {
      item = item.substr(1, item.size() - 2);
    }
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + text + "'");
  }
  if (pos != text.size()) throw ConfigError(key + ": not a number: '" + text + "'");
  return v;
}

std::size_t to_size(const std::string& key, const std::string& text) {
  const double v = to_double(key, text);
  if (v < 0 || v != std::floor(v)) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string to_string_value(const std::string& text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    return text.substr(1, text.size() - 2);
  }
  return text;
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Re-raises an error with the stage and utterance prepended, keeping its kind.
template <typename F>
void in_stage(const std::string& stage, const std::string& utt, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + stage + ", utterance " + utt + ": " + e.what());
  }
}

FeatureMatrix stack_rows(const std::vector<double>& rows, std::size_t cols) {
  return FeatureMatrix(rows.size() / cols, cols, rows);
}

void append_rows(std::vector<double>& dst, const FeatureMatrix& m) {
  dst.insert(dst.end(), m.data().begin(), m.data().end());
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError(p.string(), "cannot create directory: " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
  write_file_bytes(p.string(), text);
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Frames [t0, t0 + n) of a stacked matrix.
FeatureMatrix rows_of(const FeatureMatrix& m, std::size_t t0, std::size_t n) {
  return m.slice_rows(t0, t0 + n);
}

// Posteriors for one stream: a peak per true-state segment, wrong with
// probability equal to the segment's corruption, mixed with a noisy
// near-uniform distribution.
FeatureMatrix corrupt_posteriors(const std::vector<int>& truth, const std::vector<double>& c,
                                 std::size_t num_states, double temperature,
                                 std::mt19937_64& rng) {
  const std::size_t n = truth.size();
  FeatureMatrix p(n, num_states);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(1, num_states - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t peak = 0;
  std::vector<double> noise(num_states);
  for (std::size_t t = 0; t < n; ++t) {
    if (t == 0 || truth[t] != truth[t - 1]) {
      const auto s = static_cast<std::size_t>(truth[t]);
      peak = u01(rng) < c[t] ? (s + other(rng)) % num_states : s;
    }
    double z = 0.0;
    for (auto& e : noise) {
      e = std::exp(temperature * gauss(rng));
      z += e;
    }
    for (std::size_t s = 0; s < num_states; ++s) {
      p(t, s) = c[t] * noise[s] / z + (s == peak ? 1.0 - c[t] : 0.0);
    }
  }
  return p;
}

FeatureMatrix read_run_matrix(const fs::path& p, std::size_t rows, std::size_t cols) {
  if (!fs::exists(p)) throw DataError("missing artifact: " + p.string());
  FeatureMatrix m = read_matrix(p.string());
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(p.string() + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", found " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " (stale artifact?)");
  }
  return m;
}

std::size_t eval_frames(const Corpus& corpus) {
  std::size_t n = 0;
  for (std::size_t u : corpus.split_indices(Split::kEval)) n += corpus.utterances()[u].frames;
  return n;
}

// Conditions of the run, each checked against the corpus.
std::vector<std::string> run_conditions(const ExperimentConfig& cfg, const Corpus& corpus) {
  auto conds = cfg.conditions();
  for (const auto& c : conds) {
    if (!corpus.has_condition(c)) {
      throw ConfigError("condition '" + c + "' is not in the corpus at " + corpus.dir());
    }
  }
  return conds;
}

std::string system_for(Loss l) {
  switch (l) {
    case Loss::kCE:
      return "CE";
    case Loss::kMSE:
      return "MSE";
    case Loss::kMMI:
      return "MMI";
    case Loss::kMM:
      return "MM";
  }
  return "?";
}

// Systems that the run produces, in table order.
std::vector<std::string> run_systems(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& s : kSystems) {
    bool learned = false, wanted = false;
    for (Loss l : {Loss::kMSE, Loss::kCE, Loss::kMMI, Loss::kMM}) {
      if (system_for(l) != s) continue;
      learned = true;
      wanted = std::find(cfg.losses.begin(), cfg.losses.end(), l) != cfg.losses.end();
    }
    if (!learned || wanted) out.push_back(s);
  }
  return out;
}

// Average over the noisy conditions; the clean column joins only when it
// is the sole condition.
double table_average(const std::vector<std::string>& conds, const std::vector<double>& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < conds.size(); ++i) {
    if (conds[i] == "clean") continue;
    sum += v[i];
    ++n;
  }
  if (n == 0) {
    for (double x : v) sum += x;
    n = v.size();
  }
  return sum / static_cast<double>(n);
}

std::string table_csv(const std::vector<std::string>& conds,
                      const std::vector<std::string>& systems,
                      const std::vector<std::vector<double>>& values) {
  std::string out = "system";
  for (const auto& c : conds) out += "," + c;
  out += ",avg\n";
  for (std::size_t i = 0; i < systems.size(); ++i) {
    out += systems[i];
    for (double v : values[i]) out += "," + format_value(v);
    out += "," + format_value(table_average(conds, values[i])) + "\n";
  }
  return out;
}

}  // namespace

std::string condition_label(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return "clean";
  if (!std::isfinite(snr_db)) throw ConfigError("SNR must be finite or clean");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", snr_db);
  return buf;
}

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    if (item == "clean" || item == "inf") {
      out.push_back(kCleanSnr);
    } else {
      const double v = to_double("snr", item);
      if (!std::isfinite(v)) throw ConfigError("snr: '" + item + "' is not finite");
      out.push_back(v);
    }
  }
  if (out.empty()) throw ConfigError("snr list is empty");
  return out;
}

void SyntheticSpec::validate() const {
  if (n_utterances == 0) throw ConfigError("synth: n_utterances must be positive");
  if (num_states() < 2) throw ConfigError("synth: need at least 2 states");
  if (min_frames == 0 || min_frames > max_frames) {
    throw ConfigError("synth: need 0 < min_frames <= max_frames");
  }
  if (min_state_frames == 0 || min_state_frames > max_state_frames) {
    throw ConfigError("synth: need 0 < min_state_frames <= max_state_frames");
  }
  if (video_min_run == 0 || video_min_run > video_max_run) {
    throw ConfigError("synth: need 0 < video_min_run <= video_max_run");
  }
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(clean_corruption) || !unit(video_min) || !unit(video_max) || video_min > video_max) {
    throw ConfigError("synth: corruption levels must lie in [0, 1]");
  }
  if (!(self_loop > 0.0 && self_loop < 1.0)) throw ConfigError("synth: self_loop must be in (0, 1)");
  if (!(snr_slope_db > 0.0)) throw ConfigError("synth: snr_slope_db must be positive");
  if (audio_fluctuation < 0.0 || noise_temperature < 0.0) {
    throw ConfigError("synth: audio_fluctuation and noise_temperature must be >= 0");
  }
  if (train_fraction < 0.0 || dev_fraction < 0.0 || train_fraction + dev_fraction > 1.0) {
    throw ConfigError("synth: split fractions must be non-negative and sum to at most 1");
  }
  if (snr_list.empty()) throw ConfigError("synth: snr list is empty");
}

StateGraph synthetic_graph(const SyntheticSpec& spec) {
  const std::size_t s_count = spec.num_states();
  const std::size_t per = spec.states_per_word;
  std::vector<double> initial(s_count, 0.0);
  std::vector<std::vector<double>> trans(s_count, std::vector<double>(s_count, 0.0));
  std::vector<std::string> labels(s_count);
  std::vector<bool> boundaries(s_count, false);
  for (std::size_t w = 0; w < spec.num_words; ++w) {
    initial[w * per] = 1.0 / static_cast<double>(spec.num_words);
    for (std::size_t k = 0; k < per; ++k) {
      const std::size_t s = w * per + k;
      labels[s] = "w" + std::to_string(w);
      boundaries[s] = k == 0;
      trans[s][s] = spec.self_loop;
      if (k + 1 < per) {
        trans[s][s + 1] = 1.0 - spec.self_loop;
      } else {
        for (std::size_t v = 0; v < spec.num_words; ++v) {
          trans[s][v * per] += (1.0 - spec.self_loop) / static_cast<double>(spec.num_words);
        }
      }
    }
  }
  return StateGraph(initial, trans, labels, boundaries);
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kEval:
      return "eval";
  }
  return "?";
}

void synth_generate(const SyntheticSpec& spec, std::uint64_t seed, const std::string& dir,
                    bool force) {
  spec.validate();
  const fs::path root(dir);
  if (fs::exists(root) && !fs::is_directory(root)) {
    throw ConfigError(dir + " exists and is not a directory");
  }
  if (fs::exists(root) && !fs::is_empty(root) && !force) {
    throw ConfigError("refusing to write into non-empty directory " + dir + " (use --force)");
  }
  ensure_dir(root);

  const std::size_t n = spec.n_utterances;
  const std::size_t s_count = spec.num_states();
  std::vector<std::string> conds;
  for (double snr : spec.snr_list) conds.push_back(condition_label(snr));

  std::vector<Split> splits(n, Split::kEval);
  {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
    const auto n_dev = std::min(n - n_train,
                                static_cast<std::size_t>(std::llround(spec.dev_fraction * n)));
    for (std::size_t k = 0; k < n; ++k) {
      splits[perm[k]] = k < n_train ? Split::kTrain : k < n_train + n_dev ? Split::kDev : Split::kEval;
    }
  }

  std::vector<double> targets_rows, va_rows, vs_rows, video_rows;
  std::vector<std::vector<double>> a_rows(conds.size()), audio_rows(conds.size());
  nlohmann::ordered_json utts = nlohmann::ordered_json::array();
  std::size_t offset = 0, video_offset = 0;
  const RatePair rates{kVideoRate, kPosteriorRate};

  for (std::size_t u = 0; u < n; ++u) {
    std::seed_seq sq{seed, static_cast<std::uint64_t>(u), std::uint64_t{0}};
    std::mt19937_64 rng(sq);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    // Reference word sequence and state alignment.
    std::uniform_int_distribution<std::size_t> len_dist(spec.min_frames, spec.max_frames);
    std::uniform_int_distribution<std::size_t> word_dist(0, spec.num_words - 1);
    std::uniform_int_distribution<std::size_t> dur_dist(spec.min_state_frames,
                                                        spec.max_state_frames);
    const std::size_t want = len_dist(rng);
    std::vector<int> truth;
    while (truth.size() < want) {
      const std::size_t w = word_dist(rng);
      for (std::size_t k = 0; k < spec.states_per_word; ++k) {
        truth.insert(truth.end(), dur_dist(rng),
                     static_cast<int>(w * spec.states_per_word + k));
      }
    }
    truth.resize(want);
    const std::size_t frames = truth.size();
    const std::size_t vframes = (frames * kVideoRate + kPosteriorRate - 1) / kPosteriorRate;

    // Piecewise-constant video corruption at the video rate.
    std::uniform_int_distribution<std::size_t> run_dist(spec.video_min_run, spec.video_max_run);
    std::uniform_real_distribution<double> vlevel(spec.video_min, spec.video_max);
    auto video_levels = [&]() {
      std::vector<double> lv;
      while (lv.size() < vframes) lv.insert(lv.end(), run_dist(rng), vlevel(rng));
      lv.resize(vframes);
      return lv;
    };
    const std::vector<double> cva25 = video_levels();
    const std::vector<double> cvs25 = video_levels();
    const auto idx = dda_indices(vframes, rates, frames);
    std::vector<double> cva(frames), cvs(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      cva[t] = cva25[idx[t]];
      cvs[t] = cvs25[idx[t]];
    }
    append_rows(va_rows, corrupt_posteriors(truth, cva, s_count, spec.noise_temperature, rng));
    append_rows(vs_rows, corrupt_posteriors(truth, cvs, s_count, spec.noise_temperature, rng));

    // Video side channels: brightness and blur follow VA corruption, mirror
    // correlation follows VS corruption, the DCT slots are distractors.
    for (std::size_t t = 0; t < vframes; ++t) {
      for (int k = 0; k < 5; ++k) video_rows.push_back(gauss(rng));
      video_rows.push_back(128.0 - 60.0 * cva25[t] + 5.0 * gauss(rng));
      video_rows.push_back(50.0 * (1.0 - cva25[t]) + 3.0 * gauss(rng));
      video_rows.push_back(std::clamp(1.0 - 1.2 * cvs25[t] + 0.1 * gauss(rng), -1.0, 1.0));
    }
    for (int s : truth) targets_rows.push_back(static_cast<double>(s));

    for (std::size_t k = 0; k < conds.size(); ++k) {
      std::seed_seq csq{seed, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(k + 1)};
      std::mt19937_64 crng(csq);
      std::normal_distribution<double> cg(0.0, 1.0);
      const double snr = spec.snr_list[k];
      const double base = std::isinf(snr) ? spec.clean_corruption
                                          : logistic(-snr / spec.snr_slope_db);
      const double b = logit(std::clamp(base, 1e-6, 1.0 - 1e-6));
      constexpr double kRho = 0.95;
      double f = spec.audio_fluctuation * cg(crng);
      std::vector<double> ca(frames);
      for (std::size_t t = 0; t < frames; ++t) {
        if (t > 0) f = kRho * f + std::sqrt(1.0 - kRho * kRho) * spec.audio_fluctuation * cg(crng);
        ca[t] = base <= 0.0 ? 0.0 : base >= 1.0 ? 1.0 : logistic(b + f);
      }
      append_rows(a_rows[k], corrupt_posteriors(truth, ca, s_count, spec.noise_temperature, crng));
      // Audio side channels: the SNR slot and the noise energy follow the
      // audio corruption; MFCCs, deltas, speech energy and VAD are distractors.
      for (std::size_t t = 0; t < frames; ++t) {
        const double c = std::clamp(ca[t], 1e-4, 1.0 - 1e-4);
        const double snr_est = 3.0 * std::log((1.0 - c) / c) + cg(crng);
        for (int j = 0; j < 5; ++j) audio_rows[k].push_back(cg(crng));
        for (int j = 0; j < 5; ++j) audio_rows[k].push_back(0.3 * cg(crng));
        const double speech = 60.0 + 5.0 * cg(crng);
        audio_rows[k].push_back(snr_est);
        audio_rows[k].push_back(speech);
        audio_rows[k].push_back(speech - snr_est + cg(crng));
        audio_rows[k].push_back(std::uniform_real_distribution<double>(0.0, 1.0)(crng));
      }
    }

    char id[32];
    std::snprintf(id, sizeof(id), "utt%05zu", u);
    nlohmann::ordered_json uj;
    uj["id"] = id;
    uj["split"] = split_name(splits[u]);
    uj["frames"] = frames;
    uj["offset"] = offset;
    uj["video_frames"] = vframes;
    uj["video_offset"] = video_offset;
    utts.push_back(std::move(uj));
    offset += frames;
    video_offset += vframes;
  }

  write_matrix(stack_rows(targets_rows, 1), (root / "targets.avsf").string());
  write_matrix(stack_rows(va_rows, s_count), (root / "posteriors_VA.avsf").string());
  write_matrix(stack_rows(vs_rows, s_count), (root / "posteriors_VS.avsf").string());
  write_matrix(stack_rows(video_rows, kVideoReliabilityDim), (root / "video_rel.avsf").string());
  for (std::size_t k = 0; k < conds.size(); ++k) {
    write_matrix(stack_rows(a_rows[k], s_count),
                 (root / ("posteriors_A_" + conds[k] + ".avsf")).string());
    write_matrix(stack_rows(audio_rows[k], kAudioReliabilityDim),
                 (root / ("audio_rel_" + conds[k] + ".avsf")).string());
  }
  write_text(root / "graph.json", state_graph_to_json(synthetic_graph(spec)));

  nlohmann::ordered_json m;
  m["format"] = "avfuse-corpus";
  m["version"] = 1;
  m["seed"] = seed;
  m["num_states"] = s_count;
  m["frame_rate"] = kPosteriorRate;
  m["video_rate"] = kVideoRate;
  m["total_frames"] = offset;
  m["total_video_frames"] = video_offset;
  m["conditions"] = conds;
  m["utterances"] = std::move(utts);
  write_text(root / "manifest.json", m.dump(1) + "\n");
}

Corpus Corpus::Load(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest = root / "manifest.json";
  if (!fs::exists(manifest)) throw DataError("no corpus manifest at " + manifest.string());
  Corpus c;
  c.dir_ = dir;
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file_bytes(manifest.string()));
    c.seed_ = m.at("seed").get<std::uint64_t>();
    c.conditions_ = m.at("conditions").get<std::vector<std::string>>();
    for (const auto& uj : m.at("utterances")) {
      UtteranceInfo info;
      info.id = uj.at("id").get<std::string>();
      const auto split = uj.at("split").get<std::string>();
      info.split = split == "train" ? Split::kTrain : split == "dev" ? Split::kDev : Split::kEval;
      if (split != "train" && split != "dev" && split != "eval") {
        throw FormatError("utterance " + info.id + " has unknown split '" + split + "'");
      }
      info.frames = uj.at("frames").get<std::size_t>();
      info.offset = uj.at("offset").get<std::size_t>();
      info.video_frames = uj.at("video_frames").get<std::size_t>();
      info.video_offset = uj.at("video_offset").get<std::size_t>();
      c.utts_.push_back(std::move(info));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  std::size_t video_total = 0;
  for (const auto& u : c.utts_) {
    if (u.offset != c.total_frames_ || u.video_offset != video_total) {
      throw FormatError(manifest.string() + ": utterance " + u.id + " has a bad offset");
    }
    c.total_frames_ += u.frames;
    video_total += u.video_frames;
  }
  c.graph_ = read_state_graph((root / "graph.json").string());
  const std::size_t s_count = c.graph_->num_states();
  auto load = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    return read_run_matrix(root / name, rows, cols);
  };
  const FeatureMatrix targets = load("targets.avsf", c.total_frames_, 1);
  c.targets_.reserve(c.total_frames_);
  for (std::size_t t = 0; t < c.total_frames_; ++t) c.targets_.push_back(static_cast<int>(targets(t, 0)));
  c.post_va_ = load("posteriors_VA.avsf", c.total_frames_, s_count);
  c.post_vs_ = load("posteriors_VS.avsf", c.total_frames_, s_count);
  c.video_rel_ = load("video_rel.avsf", video_total, kVideoReliabilityDim);
  for (const auto& cond : c.conditions_) {
    c.post_a_[cond] = load("posteriors_A_" + cond + ".avsf", c.total_frames_, s_count);
    c.audio_rel_[cond] = load("audio_rel_" + cond + ".avsf", c.total_frames_, kAudioReliabilityDim);
  }
  return c;
}

bool Corpus::has_condition(const std::string& cond) const { return post_a_.count(cond) > 0; }

StreamBundle Corpus::bundle(std::size_t u, const std::string& cond) const {
  const auto it = post_a_.find(cond);
  if (it == post_a_.end()) throw ConfigError("condition '" + cond + "' is not in the corpus");
  const auto& info = utts_.at(u);
  return StreamBundle(validate_posteriors(rows_of(it->second, info.offset, info.frames)),
                      validate_posteriors(rows_of(post_va_, info.offset, info.frames)),
                      validate_posteriors(rows_of(post_vs_, info.offset, info.frames)));
}

TargetAlignment Corpus::targets(std::size_t u) const {
  const auto& info = utts_.at(u);
  const auto b = targets_.begin() + static_cast<std::ptrdiff_t>(info.offset);
  return TargetAlignment(std::vector<int>(b, b + static_cast<std::ptrdiff_t>(info.frames)),
                         num_states());
}

FeatureMatrix Corpus::audio_reliability(std::size_t u, const std::string& cond) const {
  const auto it = audio_rel_.find(cond);
  if (it == audio_rel_.end()) throw ConfigError("condition '" + cond + "' is not in the corpus");
  const auto& info = utts_.at(u);
  return rows_of(it->second, info.offset, info.frames);
}

FeatureMatrix Corpus::video_reliability(std::size_t u) const {
  const auto& info = utts_.at(u);
  return rows_of(video_rel_, info.video_offset, info.video_frames);
}

std::vector<std::size_t> Corpus::split_indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < utts_.size(); ++u) {
    if (utts_[u].split == s) out.push_back(u);
  }
  return out;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::stringstream ss(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + full);
    }
    out[full] = trim(line.substr(eq + 1));
  }
  return out;
}

std::vector<std::string> ExperimentConfig::conditions() const {
  std::vector<std::string> out;
  for (double s : snr_list) out.push_back(condition_label(s));
  return out;
}

void ExperimentConfig::validate() const {
  if (snr_list.empty()) throw ConfigError("snr list is empty");
  auto conds = conditions();
  std::sort(conds.begin(), conds.end());
  if (std::adjacent_find(conds.begin(), conds.end()) != conds.end()) {
    throw ConfigError("snr list has duplicates");
  }
  if (net_dims.size() < 2 || net_dims.front() != kReliabilityDim || net_dims.back() != kNumStreams) {
    throw ConfigError("net dims must start at 43 and end at 3");
  }
  if (train.patience == 0) throw ConfigError("train.patience must be at least 1");
  if (train.batch_frames == 0 || train.batch_utterances == 0) {
    throw ConfigError("train batch sizes must be positive");
  }
  synth.validate();
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  const ConfigMap map = parse_config_text(text);
  for (const auto& [key, raw] : map) {
    const std::string v = to_string_value(raw);
    if (key == "corpus") cfg.corpus_dir = v;
    else if (key == "out") cfg.out_dir = v;
    else if (key == "seed") cfg.seed = to_size(key, v);
    else if (key == "snr") cfg.snr_list = parse_snr_list(raw);
    else if (key == "losses") {
      cfg.losses.clear();
      for (const auto& item : split_list(raw)) cfg.losses.push_back(parse_loss(item));
    }
    else if (key == "reliability.top_k") cfg.reliability.top_k = to_size(key, v);
    else if (key == "reliability.delta_t") cfg.reliability.delta_t = to_double(key, v);
    else if (key == "reliability.divergence_window") cfg.reliability.divergence_window = to_double(key, v);
    else if (key == "reliability.ratio_floor") cfg.reliability.ratio_floor = to_double(key, v);
    else if (key == "reliability.clamp_k") cfg.reliability.clamp_k = to_bool(key, v);
    else if (key == "net.dims") {
      cfg.net_dims.clear();
      for (const auto& item : split_list(raw)) cfg.net_dims.push_back(to_size(key, item));
    }
    else if (key == "train.learning_rate") cfg.train.learning_rate = to_double(key, v);
    else if (key == "train.batch_frames") cfg.train.batch_frames = to_size(key, v);
    else if (key == "train.batch_utterances") cfg.train.batch_utterances = to_size(key, v);
    else if (key == "train.max_iterations") cfg.train.max_iterations = to_size(key, v);
    else if (key == "train.patience") cfg.train.patience = to_size(key, v);
    else if (key == "train.finetune_iterations") cfg.train.finetune_iterations = to_size(key, v);
    else if (key == "train.kappa") cfg.train.kappa = to_double(key, v);
    else if (key == "oracle.max_iters") cfg.oracle.max_iters = to_size(key, v);
    else if (key == "oracle.tol") cfg.oracle.tol = to_double(key, v);
    else if (key == "synth.n_utterances") cfg.synth.n_utterances = to_size(key, v);
    else if (key == "synth.min_frames") cfg.synth.min_frames = to_size(key, v);
    else if (key == "synth.max_frames") cfg.synth.max_frames = to_size(key, v);
    else if (key == "synth.num_words") cfg.synth.num_words = to_size(key, v);
    else if (key == "synth.states_per_word") cfg.synth.states_per_word = to_size(key, v);
    else if (key == "synth.self_loop") cfg.synth.self_loop = to_double(key, v);
    else if (key == "synth.min_state_frames") cfg.synth.min_state_frames = to_size(key, v);
    else if (key == "synth.max_state_frames") cfg.synth.max_state_frames = to_size(key, v);
    else if (key == "synth.snr") cfg.synth.snr_list = parse_snr_list(raw);
    else if (key == "synth.clean_corruption") cfg.synth.clean_corruption = to_double(key, v);
    else if (key == "synth.snr_slope_db") cfg.synth.snr_slope_db = to_double(key, v);
    else if (key == "synth.audio_fluctuation") cfg.synth.audio_fluctuation = to_double(key, v);
    else if (key == "synth.video_min") cfg.synth.video_min = to_double(key, v);
    else if (key == "synth.video_max") cfg.synth.video_max = to_double(key, v);
    else if (key == "synth.noise_temperature") cfg.synth.noise_temperature = to_double(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return parse_experiment_config(read_file_bytes(path));
}

void extract_stage(const ExperimentConfig& cfg, const Corpus& corpus) {
  const fs::path dir = fs::path(cfg.out_dir) / "reliability";
  ensure_dir(dir);
  std::string names;
  for (const auto& n : reliability_slot_names()) names += n + "\n";
  write_text(dir / "slots.txt", names);
  const RatePair rates{kVideoRate, kPosteriorRate};
  for (const auto& cond : run_conditions(cfg, corpus)) {
    std::vector<double> rows;
    rows.reserve(corpus.total_frames() * kReliabilityDim);
    for (std::size_t u = 0; u < corpus.utterances().size(); ++u) {
      in_stage("extract", corpus.utterances()[u].id, [&] {
        const StreamBundle b = corpus.bundle(u, cond);
        const FeatureMatrix video =
            resample_features(corpus.video_reliability(u), rates, b.frames());
        append_rows(rows, assemble_reliability(b, corpus.audio_reliability(u, cond), video,
                                               cfg.reliability));
      });
    }
    write_matrix(stack_rows(rows, kReliabilityDim), (dir / (cond + ".avsf")).string());
  }
}

void oracle_stage(const ExperimentConfig& cfg, const Corpus& corpus) {
  const fs::path wdir = fs::path(cfg.out_dir) / "weights";
  const fs::path odir = fs::path(cfg.out_dir) / "oracle";
  ensure_dir(wdir);
  ensure_dir(odir);
  for (const auto& cond : run_conditions(cfg, corpus)) {
    std::vector<double> rows;
    std::string report;
    for (std::size_t u : corpus.split_indices(Split::kEval)) {
      const auto& id = corpus.utterances()[u].id;
      in_stage("oracle", id, [&] {
        const OracleResult r = oracle_weights(corpus.bundle(u, cond), corpus.targets(u), cfg.oracle);
        append_rows(rows, r.weights.matrix());
        double ce0 = 0.0, ce1 = 0.0;
        for (const auto& f : r.report.frames) {
          ce0 += f.initial_ce;
          ce1 += f.final_ce;
        }
        const double n = static_cast<double>(r.report.frames.size());
        nlohmann::ordered_json j;
        j["utterance"] = id;
        j["frames"] = r.report.frames.size();
        j["equal_weight_ce"] = ce0 / n;
        j["oracle_ce"] = ce1 / n;
        j["converged_frames"] = r.report.num_converged();
        report += j.dump() + "\n";
      });
    }
    write_matrix(stack_rows(rows, kNumStreams), (wdir / ("OW_" + cond + ".avsf")).string());
    write_text(odir / ("report_" + cond + ".jsonl"), report);
  }
}

void train_stage(const ExperimentConfig& cfg, const Corpus& corpus) {
  if (cfg.losses.empty()) return;
  const fs::path mdir = fs::path(cfg.out_dir) / "models";
  ensure_dir(mdir);
  const auto conds = run_conditions(cfg, corpus);
  const auto train_idx = corpus.split_indices(Split::kTrain);
  if (train_idx.empty()) throw DataError("corpus has no training utterances");
  std::vector<TrainUtterance> data;
  data.reserve(train_idx.size() * conds.size());
  for (const auto& cond : conds) {
    const FeatureMatrix rel = read_run_matrix(fs::path(cfg.out_dir) / "reliability" / (cond + ".avsf"),
                                              corpus.total_frames(), kReliabilityDim);
    for (std::size_t u : train_idx) {
      const auto& info = corpus.utterances()[u];
      in_stage("train", info.id, [&] {
        data.push_back(TrainUtterance{info.id + "@" + cond, rows_of(rel, info.offset, info.frames),
                                      corpus.bundle(u, cond), corpus.targets(u)});
      });
    }
  }
  for (Loss loss : cfg.losses) {
    TrainConfig tc = cfg.train;
    tc.loss = loss;
    tc.seed = cfg.seed;
    TrainResult r;
    try {
      r = train(net_init(cfg.net_dims, cfg.seed), data, tc, &corpus.graph());
    } catch (const Error& e) {
      throw Error(e.kind(), "stage train (" + loss_name(loss) + "): " + e.what());
    }
    save_net(r.net, (mdir / ("net_" + loss_name(loss) + ".json")).string());
    write_text(mdir / ("train_log_" + loss_name(loss) + ".csv"), train_log_csv(r.report));
  }
}

void fuse_stage(const ExperimentConfig& cfg, const Corpus& corpus) {
  const fs::path wdir = fs::path(cfg.out_dir) / "weights";
  ensure_dir(wdir);
  const auto eval_idx = corpus.split_indices(Split::kEval);
  const std::size_t n_eval = eval_frames(corpus);
  const std::map<std::string, std::array<double, kNumStreams>> fixed = {
      {"A", {1.0, 0.0, 0.0}},
      {"VA", {0.0, 1.0, 0.0}},
      {"VS", {0.0, 0.0, 1.0}},
      {"EqualFixed", {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}}};
  std::map<std::string, IntegrationNet> nets;
  for (Loss l : cfg.losses) {
    const fs::path p = fs::path(cfg.out_dir) / "models" / ("net_" + loss_name(l) + ".json");
    if (!fs::exists(p)) throw DataError("missing artifact: " + p.string());
    nets[system_for(l)] = load_net(p.string());
  }
  for (const auto& cond : run_conditions(cfg, corpus)) {
    for (const auto& [sys, w] : fixed) {
      write_matrix(StreamWeights::Constant(n_eval, w).matrix(),
                   (wdir / (sys + "_" + cond + ".avsf")).string());
    }
    if (nets.empty()) continue;
    const FeatureMatrix rel = read_run_matrix(fs::path(cfg.out_dir) / "reliability" / (cond + ".avsf"),
                                              corpus.total_frames(), kReliabilityDim);
    for (const auto& [sys, net] : nets) {
      std::vector<double> rows;
      rows.reserve(n_eval * kNumStreams);
      for (std::size_t u : eval_idx) {
        const auto& info = corpus.utterances()[u];
        in_stage("fuse", info.id, [&] {
          append_rows(rows, predict_weights(net, rows_of(rel, info.offset, info.frames)).matrix());
        });
      }
      write_matrix(stack_rows(rows, kNumStreams), (wdir / (sys + "_" + cond + ".avsf")).string());
    }
  }
}

void decode_stage(const ExperimentConfig& cfg, const Corpus& corpus) {
  const fs::path ddir = fs::path(cfg.out_dir) / "decode";
  ensure_dir(ddir);
  const auto eval_idx = corpus.split_indices(Split::kEval);
  const std::size_t n_eval = eval_frames(corpus);
  for (const auto& cond : run_conditions(cfg, corpus)) {
    for (const auto& sys : run_systems(cfg)) {
      const FeatureMatrix w = read_run_matrix(
          fs::path(cfg.out_dir) / "weights" / (sys + "_" + cond + ".avsf"), n_eval, kNumStreams);
      std::string out;
      std::size_t pos = 0;
      for (std::size_t u : eval_idx) {
        const auto& info = corpus.utterances()[u];
        in_stage("decode", info.id, [&] {
          const FusedPosteriors fused =
              fuse(corpus.bundle(u, cond), StreamWeights(rows_of(w, pos, info.frames)));
          out += decode_result_json(info.id, viterbi(fused, corpus.graph())) + "\n";
        });
        pos += info.frames;
      }
      write_text(ddir / (sys + "_" + cond + ".jsonl"), out);
    }
  }
}

void score_stage(const ExperimentConfig& cfg, const Corpus& corpus) {
  const auto conds = run_conditions(cfg, corpus);
  const auto systems = run_systems(cfg);
  const auto eval_idx = corpus.split_indices(Split::kEval);
  const std::size_t n_eval = eval_frames(corpus);
  std::map<std::string, std::vector<std::string>> refs;
  for (std::size_t u : eval_idx) {
    refs[corpus.utterances()[u].id] = corpus.graph().words(corpus.targets(u).states());
  }
  std::vector<std::vector<double>> wer_v(systems.size()), ce_v(systems.size());
  for (std::size_t si = 0; si < systems.size(); ++si) {
    const auto& sys = systems[si];
    for (const auto& cond : conds) {
      const fs::path dp = fs::path(cfg.out_dir) / "decode" / (sys + "_" + cond + ".jsonl");
      if (!fs::exists(dp)) throw DataError("missing artifact: " + dp.string());
      std::stringstream lines(read_file_bytes(dp.string()));
      std::string line;
      std::size_t errors = 0, ref_words = 0, seen = 0;
      while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::string id;
        std::vector<std::string> hyp;
        try {
          const auto j = nlohmann::json::parse(line);
          id = j.at("utterance").get<std::string>();
          hyp = j.at("words").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
          throw FormatError(dp.string() + ": " + e.what());
        }
        const auto it = refs.find(id);
        if (it == refs.end()) throw DataError(dp.string() + ": unknown utterance " + id);
        const WerResult r = wer(it->second, hyp);
        errors += r.errors();
        ref_words += r.ref_words;
        ++seen;
      }
      if (seen != eval_idx.size()) {
        throw DataError(dp.string() + ": expected " + std::to_string(eval_idx.size()) +
                        " utterances, found " + std::to_string(seen));
      }
      wer_v[si].push_back(ref_words ? 100.0 * static_cast<double>(errors) / ref_words : 0.0);

      const FeatureMatrix w = read_run_matrix(
          fs::path(cfg.out_dir) / "weights" / (sys + "_" + cond + ".avsf"), n_eval, kNumStreams);
      double ce_sum = 0.0;
      std::size_t pos = 0;
      for (std::size_t u : eval_idx) {
        const auto& info = corpus.utterances()[u];
        in_stage("score", info.id, [&] {
          const FusedPosteriors fused =
              fuse(corpus.bundle(u, cond), StreamWeights(rows_of(w, pos, info.frames)));
          ce_sum += ce_loss(fused, corpus.targets(u)) * static_cast<double>(info.frames);
        });
        pos += info.frames;
      }
      ce_v[si].push_back(ce_sum / static_cast<double>(n_eval));
    }
  }
  write_text(fs::path(cfg.out_dir) / "wer_table.csv", table_csv(conds, systems, wer_v));
  write_text(fs::path(cfg.out_dir) / "ce_table.csv", table_csv(conds, systems, ce_v));
}

void run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Corpus corpus = Corpus::Load(cfg.corpus_dir);
  ensure_dir(cfg.out_dir);
  extract_stage(cfg, corpus);
  oracle_stage(cfg, corpus);
  train_stage(cfg, corpus);
  fuse_stage(cfg, corpus);
  decode_stage(cfg, corpus);
  score_stage(cfg, corpus);
}

double ResultTable::at(const std::string& system, const std::string& column) const {
  const auto si = std::find(systems.begin(), systems.end(), system);
  const auto ci = std::find(columns.begin(), columns.end(), column);
  if (si == systems.end() || ci == columns.end()) {
    throw DataError("result table has no entry " + system + "/" + column);
  }
  return values[static_cast<std::size_t>(si - systems.begin())]
               [static_cast<std::size_t>(ci - columns.begin())];
}

bool ResultTable::has_system(const std::string& system) const {
  return std::find(systems.begin(), systems.end(), system) != systems.end();
}

ResultTable parse_result_table(const std::string& csv_text) {
  ResultTable t;
  std::stringstream ss(csv_text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
    if (t.columns.empty()) {
      if (cells.size() < 2 || cells.front() != "system") {
        throw ParseError("result table header must start with 'system'", lineno, 1);
      }
      t.columns.assign(cells.begin() + 1, cells.end());
      continue;
    }
    if (cells.size() != t.columns.size() + 1) {
      throw ParseError("result table line " + std::to_string(lineno) + " has " +
                           std::to_string(cells.size()) + " fields, expected " +
                           std::to_string(t.columns.size() + 1),
                       lineno, cells.size());
    }
    t.systems.push_back(cells.front());
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      try {
        row.push_back(std::stod(cells[i]));
      } catch (const std::exception&) {
        throw ParseError("result table line " + std::to_string(lineno) + ": bad number '" +
                             cells[i] + "'",
                         lineno, i + 1);
      }
    }
    t.values.push_back(std::move(row));
  }
  if (t.columns.empty()) throw FormatError("result table is empty");
  return t;
}

std::string report(const std::string& out_dir) {
  const fs::path wer_p = fs::path(out_dir) / "wer_table.csv";
  const fs::path ce_p = fs::path(out_dir) / "ce_table.csv";
  std::vector<std::string> missing;
  for (const auto& p : {wer_p, ce_p}) {
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = "missing artifacts:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  const ResultTable wer_t = parse_result_table(read_file_bytes(wer_p.string()));
  const ResultTable ce_t = parse_result_table(read_file_bytes(ce_p.string()));

  std::ostringstream os;
  auto print = [&](const std::string& title, const ResultTable& t) {
    os << title << "\n" << std::left << std::setw(12) << "system";
    for (const auto& c : t.columns) os << std::right << std::setw(9) << c;
    os << "\n";
    for (std::size_t i = 0; i < t.systems.size(); ++i) {
      os << std::left << std::setw(12) << t.systems[i];
      for (double v : t.values[i]) os << std::right << std::setw(9) << std::fixed << std::setprecision(2) << v;
      os << "\n";
    }
    os << "\n";
  };
  print("WER (%)", wer_t);
  print("Frame cross-entropy (nats)", ce_t);

  const std::string avg = "avg";
  if (wer_t.has_system("A") && wer_t.has_system("MM")) {
    const double a = wer_t.at("A", avg);
    const double mm = wer_t.at("MM", avg);
    os << "Relative WER reduction MM vs A: "
       << std::setprecision(2) << (a > 0 ? 100.0 * (a - mm) / a : 0.0) << "%\n";
  }
  std::string best_single, best_dyn;
  for (const auto& s : {"A", "VA", "VS"}) {
    if (wer_t.has_system(s) && (best_single.empty() || wer_t.at(s, avg) < wer_t.at(best_single, avg))) {
      best_single = s;
    }
  }
  for (const auto& s : {"MSE", "CE", "MMI", "MM"}) {
    if (wer_t.has_system(s) && (best_dyn.empty() || wer_t.at(s, avg) < wer_t.at(best_dyn, avg))) {
      best_dyn = s;
    }
  }
  if (!best_single.empty() && !best_dyn.empty()) {
    const double s = wer_t.at(best_single, avg);
    const double d = wer_t.at(best_dyn, avg);
    os << "Relative WER reduction best dynamic (" << best_dyn << ") vs best single stream ("
       << best_single << "): " << std::setprecision(2) << (s > 0 ? 100.0 * (s - d) / s : 0.0)
       << "%\n";
  }
  return os.str();
}

}  // namespace avfuse
