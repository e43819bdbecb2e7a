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

#include "avfuse/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "avfuse/audio_dsp.hpp"
#include "avfuse/video_features.hpp"

namespace avfuse {
namespace {

void check_distribution(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v > 0.0)) throw DataError("posterior row has a non-positive entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DataError("posterior row sums to " + std::to_string(sum) + ", not 1");
  }
}

std::vector<double> top_k_desc(std::span<const double> p, std::size_t k) {
  if (k < 2) throw ConfigError("K must be at least 2");
  if (k > p.size()) {
    throw ConfigError("K = " + std::to_string(k) + " exceeds state count " +
                      std::to_string(p.size()));
  }
  std::vector<double> v(p.begin(), p.end());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(),
                    std::greater<>());
  v.resize(k);
  return v;
}

std::size_t seconds_to_frames(double seconds, double rate, const char* what) {
  const double f = seconds * rate;
  const double r = std::round(f);
  if (std::abs(f - r) > 1e-6 || r < 1.0) {
    throw ConfigError(std::string(what) +
                      " must be a positive multiple of the frame period");
  }
  return static_cast<std::size_t>(r);
}

// Keep values at or above the mean, floor the rest, normalize.
StreamRatio ratio_rule(const std::array<double, kNumStreams>& v, double floor) {
  StreamRatio out;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(kNumStreams);
  std::array<double, kNumStreams> kept{};
  double total = 0.0;
  for (std::size_t i = 0; i < kNumStreams; ++i) {
    kept[i] = v[i] >= mean ? v[i] : floor;
    total += kept[i];
  }
  for (std::size_t i = 0; i < kNumStreams; ++i) out.weights[i] = kept[i] / total;
  return out;
}

}  // namespace

std::size_t ReliabilityConfig::delta_frames() const {
  return seconds_to_frames(delta_t, frame_rate, "delta_t");
}

std::size_t ReliabilityConfig::window_frames() const {
  return seconds_to_frames(divergence_window, frame_rate, "divergence_window");
}

std::size_t ReliabilityConfig::effective_k(std::size_t num_states) const {
  if (top_k < 2) throw ConfigError("K must be at least 2");
  if (top_k > num_states) {
    if (clamp_k && num_states >= 2) return num_states;
    throw ConfigError("K = " + std::to_string(top_k) + " exceeds state count " +
                      std::to_string(num_states) + " (set clamp_k to allow)");
  }
  return top_k;
}

double entropy(std::span<const double> p) {
  check_distribution(p);
  double h = 0.0;
  for (double v : p) h -= v * std::log(v);
  return std::max(h, 0.0);
}

double dispersion(std::span<const double> p, std::size_t k) {
  const auto top = top_k_desc(p, k);
  // Sum over pairs l < m of (ln p_l - ln p_m): entry l appears with
  // coefficient (k - 1 - 2l).
  double acc = 0.0;
  for (std::size_t l = 0; l < k; ++l) {
    acc += (static_cast<double>(k) - 1.0 - 2.0 * static_cast<double>(l)) *
           std::log(top[l]);
  }
  return std::max(0.0, 2.0 * acc / (static_cast<double>(k) * static_cast<double>(k - 1)));
}

double posterior_difference(std::span<const double> p, std::size_t k) {
  const auto top = top_k_desc(p, k);
  const double lead = std::log(top[0]);
  double acc = 0.0;
  for (std::size_t i = 1; i < k; ++i) acc += lead - std::log(top[i]);
  return acc / static_cast<double>(k - 1);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("KL: length mismatch");
  double d = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s) {
    if (!(p[s] > 0.0) || !(q[s] > 0.0)) throw DataError("KL: non-positive entry");
    d += p[s] * (std::log(p[s]) - std::log(q[s]));
  }
  return std::max(d, 0.0);
}

std::vector<double> temporal_divergence_track(const PosteriorStream& stream,
                                              std::size_t delta_frames) {
  const std::size_t n = stream.frames();
  if (delta_frames == 0) throw ConfigError("temporal divergence needs delta >= 1 frame");
  if (n <= delta_frames) {
    throw DataError("stream of " + std::to_string(n) +
                    " frames is too short for a look-ahead of " +
                    std::to_string(delta_frames) + " frames");
  }
  const auto& lp = stream.log_probs();
  const auto& pp = stream.probs();
  std::vector<double> div(n);
  const std::size_t last = n - 1 - delta_frames;
  for (std::size_t t = 0; t <= last; ++t) {
    auto p = pp.row(t);
    auto lpt = lp.row(t);
    auto lq = lp.row(t + delta_frames);
    double d = 0.0;
    for (std::size_t s = 0; s < p.size(); ++s) d += p[s] * (lpt[s] - lq[s]);
    div[t] = std::max(d, 0.0);
  }
  for (std::size_t t = last + 1; t < n; ++t) div[t] = div[last];
  return div;
}

double temporal_divergence(const PosteriorStream& stream, std::size_t t,
                           std::size_t delta_frames) {
  if (t >= stream.frames()) throw DimensionError("frame index out of range");
  const std::size_t n = stream.frames();
  if (n <= delta_frames) {
    throw DataError("stream too short for the temporal-divergence look-ahead");
  }
  const std::size_t src = std::min(t, n - 1 - delta_frames);
  return kl_divergence(stream.probs().row(src), stream.probs().row(src + delta_frames));
}

std::vector<double> temporal_divergence_mean_track(const PosteriorStream& stream,
                                                   std::size_t delta_frames,
                                                   std::size_t window_frames) {
  if (window_frames == 0) throw ConfigError("divergence window must span >= 1 frame");
  const auto div = temporal_divergence_track(stream, delta_frames);
  std::vector<double> out(div.size());
  for (std::size_t start = 0; start < div.size(); start += window_frames) {
    const std::size_t end = std::min(div.size(), start + window_frames);
    double acc = 0.0;
    for (std::size_t t = start; t < end; ++t) acc += div[t];
    const double mean = acc / static_cast<double>(end - start);
    for (std::size_t t = start; t < end; ++t) out[t] = mean;
  }
  return out;
}

double temporal_divergence_mean(const PosteriorStream& stream, std::size_t t,
                                std::size_t delta_frames, std::size_t window_frames) {
  if (t >= stream.frames()) throw DimensionError("frame index out of range");
  return temporal_divergence_mean_track(stream, delta_frames, window_frames)[t];
}

StreamRatio dispersion_ratio(const std::array<double, kNumStreams>& d, double floor) {
  for (double v : d) {
    if (!(v >= 0.0)) throw DataError("dispersion ratio needs non-negative inputs");
  }
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    return {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, true};
  }
  return ratio_rule(d, floor);
}

StreamRatio entropy_ratio(const std::array<double, kNumStreams>& h, double floor) {
  std::array<double, kNumStreams> g{};
  for (std::size_t i = 0; i < kNumStreams; ++i) {
    if (!(h[i] >= 0.0)) throw DataError("entropy ratio needs non-negative inputs");
    g[i] = 1.0 / (h[i] + kPosteriorFloor);
  }
  if (h[0] == h[1] && h[1] == h[2]) {
    return {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, h[0] == 0.0};
  }
  return ratio_rule(g, floor);
}

const std::vector<std::string>& reliability_slot_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (StreamId id : kStreamOrder) {
      const std::string s(stream_name(id));
      for (const char* m : {"entropy", "dispersion", "posterior_diff", "div", "div_mean"}) {
        n.push_back(s + "_" + m);
      }
    }
    for (StreamId id : kStreamOrder) n.push_back("entropy_ratio_" + std::string(stream_name(id)));
    for (StreamId id : kStreamOrder) n.push_back("dispersion_ratio_" + std::string(stream_name(id)));
    for (int i = 0; i < 5; ++i) n.push_back("mfcc_" + std::to_string(i));
    for (int i = 0; i < 5; ++i) n.push_back("delta_mfcc_" + std::to_string(i));
    for (const char* a : {"snr", "signal_energy", "noise_energy", "soft_vad"}) n.emplace_back(a);
    for (int i = 0; i < 5; ++i) n.push_back("dct_" + std::to_string(i));
    for (const char* v : {"brightness", "blur", "mirror_correlation"}) n.emplace_back(v);
    return n;
  }();
  return names;
}

FeatureMatrix model_based_reliability(const StreamBundle& streams,
                                      const ReliabilityConfig& cfg) {
  const std::size_t n = streams.frames();
  const std::size_t k = cfg.effective_k(streams.states());
  const std::size_t delta = cfg.delta_frames();
  const std::size_t window = cfg.window_frames();
  FeatureMatrix out(n, kAudioSlot);
  for (std::size_t i = 0; i < kNumStreams; ++i) {
    const PosteriorStream& ps = streams[i];
    const auto div = temporal_divergence_track(ps, delta);
    const auto div_mean = temporal_divergence_mean_track(ps, delta, window);
    for (std::size_t t = 0; t < n; ++t) {
      auto row = ps.probs().row(t);
      const std::size_t base = i * kMeasuresPerStream;
      out(t, base + 0) = entropy(row);
      out(t, base + 1) = dispersion(row, k);
      out(t, base + 2) = posterior_difference(row, k);
      out(t, base + 3) = div[t];
      out(t, base + 4) = div_mean[t];
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    std::array<double, kNumStreams> h{}, d{};
    for (std::size_t i = 0; i < kNumStreams; ++i) {
      h[i] = out(t, i * kMeasuresPerStream + 0);
      d[i] = out(t, i * kMeasuresPerStream + 1);
    }
    const auto wh = entropy_ratio(h, cfg.ratio_floor);
    const auto wd = dispersion_ratio(d, cfg.ratio_floor);
    for (std::size_t i = 0; i < kNumStreams; ++i) {
      out(t, kEntropyRatioSlot + i) = wh.weights[i];
      out(t, kDispersionRatioSlot + i) = wd.weights[i];
    }
  }
  return out;
}

FeatureMatrix assemble_reliability(const StreamBundle& streams,
                                   const FeatureMatrix& audio_feats,
                                   const FeatureMatrix& video_feats,
                                   const ReliabilityConfig& cfg) {
  const std::size_t n = streams.frames();
  if (audio_feats.rows() != n) {
    throw DimensionError("synchronization error: audio features have " +
                         std::to_string(audio_feats.rows()) + " frames, posteriors " +
                         std::to_string(n));
  }
  if (video_feats.rows() != n) {
    throw DimensionError("synchronization error: video features have " +
                         std::to_string(video_feats.rows()) + " frames, posteriors " +
                         std::to_string(n));
  }
  if (audio_feats.cols() != kAudioReliabilityDim) {
    throw DimensionError("audio reliability block must have 14 columns");
  }
  if (video_feats.cols() != kVideoReliabilityDim) {
    throw DimensionError("video reliability block must have 8 columns");
  }
  const FeatureMatrix mb = model_based_reliability(streams, cfg);
  FeatureMatrix out(n, kReliabilityDim);
  for (std::size_t t = 0; t < n; ++t) {
    auto o = out.row(t).begin();
    auto a = mb.row(t);
    o = std::copy(a.begin(), a.end(), o);
    auto b = audio_feats.row(t);
    o = std::copy(b.begin(), b.end(), o);
    auto c = video_feats.row(t);
    std::copy(c.begin(), c.end(), o);
  }
  return out;
}

}  // namespace avfuse
