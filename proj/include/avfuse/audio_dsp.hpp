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

// Audio ingestion and the audio-based reliability cues: frame energy, an
// MCRA-2 noise tracker, per-frame SNR, a soft VAD, MFCCs and deltas, plus
// noise mixing at a prescribed SNR.

#ifndef AVFUSE_AUDIO_DSP_HPP_
#define AVFUSE_AUDIO_DSP_HPP_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "avfuse/core.hpp"

namespace avfuse {

struct Waveform {
  Waveform() = default;
  Waveform(std::vector<double> samples, double sample_rate);

  std::vector<double> samples;
  double sample_rate = 16000.0;

  std::size_t size() const { return samples.size(); }
};

struct FrameSpec {
  double frame_len = 0.025;    // seconds
  double frame_shift = 0.010;  // seconds

  std::size_t len_samples(double rate) const;
  std::size_t shift_samples(double rate) const;
  /// Throws ConfigError unless 0 < shift <= len.
  void validate() const;
};

/// Number of frames produced for `num_samples`: floor((N - len) / shift) + 1,
/// or 0 when the signal is shorter than one frame.
std::size_t num_frames(std::size_t num_samples, const FrameSpec& spec,
                       double rate);

/// Symmetric Hamming window, 0.54 - 0.46 cos(2 pi n / (N - 1)).
std::vector<double> hamming_window(std::size_t n);

/// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

/// |X[k]|^2 for k = 0..nfft/2 of the zero-padded frame.
std::vector<double> power_spectrum(std::span<const double> frame,
                                   std::size_t nfft);

/// RIFF/WAVE, PCM 16-bit, mono only. Samples are scaled by 1/32768.
Waveform read_wav(const std::string& path);
Waveform decode_wav(const std::string& bytes,
                    const std::string& source = "<memory>");
void write_wav(const Waveform& w, const std::string& path);
std::string encode_wav(const Waveform& w);

/// Hamming-windowed frames, one per row.
FeatureMatrix frame_signal(const Waveform& w, const FrameSpec& spec);

/// Per-frame sum of squared windowed samples.
std::vector<double> signal_energy(const FeatureMatrix& frames);

struct Mcra2Config {
  double power_smoothing = 0.7;     // smoothing of the noisy power spectrum
  double min_beta = 0.8;            // continuous minimum tracking
  double min_gamma = 0.998;
  double presence_threshold = 5.0;  // on smoothed / minimum power
  double presence_smoothing = 0.2;  // speech-presence probability recursion
  double noise_smoothing = 0.95;    // floor of the noise update factor
};

/// Sequential MCRA-2 noise tracker over one utterance.
class NoiseTracker {
 public:
  explicit NoiseTracker(std::size_t bins, Mcra2Config cfg = {});

  /// Feeds one frame's power spectrum and returns the updated per-bin noise
  /// power estimate.
  const std::vector<double>& update(const std::vector<double>& power);

  const std::vector<double>& noise() const { return noise_; }
  const std::vector<double>& smoothed() const { return smoothed_; }
  const std::vector<double>& minimum() const { return minimum_; }
  const std::vector<double>& presence() const { return presence_; }

 private:
  Mcra2Config cfg_;
  bool started_ = false;
  std::vector<double> smoothed_;
  std::vector<double> minimum_;
  std::vector<double> presence_;
  std::vector<double> noise_;
};

/// Per-frame noise energy N_t in the same units as signal_energy, so that
/// stationary noise alone gives N_t close to S_t. Floored at 1e-14.
std::vector<double> noise_energy_mcra2(const Waveform& w, const FrameSpec& spec,
                                       const Mcra2Config& cfg = {});

/// 10 log10(S_t / N_t).
std::vector<double> snr_track(const std::vector<double>& signal,
                              const std::vector<double>& noise);

struct Band {
  double low_hz = 300.0;
  double high_hz = 4000.0;
};

/// Fraction of frame energy inside `band`; 0 for a silent frame.
std::vector<double> soft_vad(const Waveform& w, const FrameSpec& spec,
                             const Band& band = {});

struct MfccConfig {
  double preemphasis = 0.97;
  std::size_t num_filters = 23;
  double log_floor = kPosteriorFloor;
};

FeatureMatrix mfcc(const Waveform& w, const FrameSpec& spec,
                   std::size_t n_coeffs = 13, const MfccConfig& cfg = {});

/// Regression deltas over +-context frames with edge clamping.
FeatureMatrix delta_features(const FeatureMatrix& m, std::size_t context = 2);

/// Sentinel target meaning "no noise": the clean signal passes through.
inline constexpr double kCleanSnr = std::numeric_limits<double>::infinity();

/// Adds a segment of `noise` (seeded offset, wrapping around) scaled so the
/// broadband SNR of the mix equals `target_db`.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                    double target_db, std::uint64_t seed);

/// Gain applied to the noise segment by mix_at_snr.
double mixing_gain(double clean_energy, double noise_energy, double target_db);

inline constexpr std::size_t kAudioReliabilityDim = 14;

struct AudioReliabilityConfig {
  FrameSpec frames;
  Band vad_band;
  Mcra2Config mcra;
  MfccConfig mfcc;
  std::size_t mfcc_offset = 0;  // first kept cepstral index
  std::size_t delta_context = 2;
};

/// T x 14 block: MFCC(5), delta MFCC(5), SNR, S, N, soft VAD.
FeatureMatrix audio_reliability_features(const Waveform& w,
                                         const AudioReliabilityConfig& cfg = {});

}  // namespace avfuse

#endif  // AVFUSE_AUDIO_DSP_HPP_
