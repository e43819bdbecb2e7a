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

// Model-based reliability measures over posterior rows and assembly of the
// 43-slot reliability vector fed to the integration net.
//
// Slot layout (0-based):
//    0-4   A:  entropy, dispersion, posterior difference, Div, mean Div
//    5-9   VA: same five measures
//   10-14  VS: same five measures
//   15-17  entropy ratio     (A, VA, VS)
//   18-20  dispersion ratio  (A, VA, VS)
//   21-34  audio: MFCC 0-4, delta MFCC 0-4, SNR, S, N, soft VAD
//   35-42  video: DCT 0-4, brightness, blur, mirror correlation
//
// The entropy ratio applies the dispersion-ratio rule to inverse entropies
// (lower entropy = more reliable). It stands in for a formula that is only
// cited, not given, in the method description.

#ifndef AVFUSE_RELIABILITY_HPP_
#define AVFUSE_RELIABILITY_HPP_

#include <array>
#include <span>
#include <string>
#include <vector>

#include "avfuse/core.hpp"

namespace avfuse {

inline constexpr std::size_t kReliabilityDim = 43;
inline constexpr std::size_t kMeasuresPerStream = 5;
inline constexpr std::size_t kEntropyRatioSlot = 15;
inline constexpr std::size_t kDispersionRatioSlot = 18;
inline constexpr std::size_t kAudioSlot = 21;
inline constexpr std::size_t kVideoSlot = 35;

struct ReliabilityConfig {
  std::size_t top_k = 15;
  double delta_t = 0.250;            // seconds of look-ahead for Div
  double divergence_window = 0.050;  // seconds averaged for mean Div
  double ratio_floor = 1e-4;         // replaces below-average values
  double frame_rate = 100.0;         // posterior frames per second
  bool clamp_k = false;              // clamp K to S instead of failing

  std::size_t delta_frames() const;
  std::size_t window_frames() const;
  std::size_t effective_k(std::size_t num_states) const;
};

double entropy(std::span<const double> p);
double dispersion(std::span<const double> p, std::size_t k);
double posterior_difference(std::span<const double> p, std::size_t k);
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// D_KL(p_t || p_{t+delta}); frames whose look-ahead falls past the end reuse
/// the value of the last frame that has one.
double temporal_divergence(const PosteriorStream& stream, std::size_t t,
                           std::size_t delta_frames);
std::vector<double> temporal_divergence_track(const PosteriorStream& stream,
                                              std::size_t delta_frames);

/// Mean of temporal_divergence over the non-overlapping window of
/// `window_frames` frames that contains t (shorter at the utterance end).
double temporal_divergence_mean(const PosteriorStream& stream, std::size_t t,
                                std::size_t delta_frames,
                                std::size_t window_frames);
std::vector<double> temporal_divergence_mean_track(const PosteriorStream& stream,
                                                   std::size_t delta_frames,
                                                   std::size_t window_frames);

struct StreamRatio {
  std::array<double, kNumStreams> weights{};
  bool degenerate = false;  // all inputs zero; weights set uniform
};

StreamRatio dispersion_ratio(const std::array<double, kNumStreams>& d,
                             double floor = 1e-4);
StreamRatio entropy_ratio(const std::array<double, kNumStreams>& h,
                          double floor = 1e-4);

/// Names of the 43 slots in layout order.
const std::vector<std::string>& reliability_slot_names();

/// Builds the T x 43 reliability matrix. `audio_feats` is T x 14 and
/// `video_feats` T x 8, both already at the posterior frame rate.
FeatureMatrix assemble_reliability(const StreamBundle& streams,
                                   const FeatureMatrix& audio_feats,
                                   const FeatureMatrix& video_feats,
                                   const ReliabilityConfig& cfg);

/// Only the 21 model-based slots (0-20) for every frame.
FeatureMatrix model_based_reliability(const StreamBundle& streams,
                                      const ReliabilityConfig& cfg);

}  // namespace avfuse

#endif  // AVFUSE_RELIABILITY_HPP_
