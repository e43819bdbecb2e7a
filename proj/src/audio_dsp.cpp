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

#include "avfuse/audio_dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "avfuse/matrix_io.hpp"

namespace avfuse {
namespace {

constexpr double kEnergyFloor = 1e-14;

// Owns an FFTW real-to-complex plan for one transform size.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(fftw_alloc_real(n)),
        out_(fftw_alloc_complex(n / 2 + 1)),
        plan_(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_,
                                   FFTW_ESTIMATE)) {}
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  // Zero-pads `frame` to n and returns |X[k]|^2, k = 0..n/2.
  void power(std::span<const double> frame, std::vector<double>& out) {
    std::fill(in_, in_ + n_, 0.0);
    std::copy_n(frame.begin(), std::min(frame.size(), n_), in_);
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    }
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

// One-sided spectrum weights so that sum_k w_k |X_k|^2 / n equals the
// time-domain energy (Parseval).
double one_sided_energy(const std::vector<double>& power, std::size_t nfft) {
  double e = 0.0;
  for (std::size_t k = 0; k < power.size(); ++k) {
    const bool edge = (k == 0) || (k == nfft / 2);
    e += (edge ? 1.0 : 2.0) * power[k];
  }
  return e / static_cast<double>(nfft);
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::uint16_t get_u16(const std::string& b, std::size_t p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[p]) |
                                    (static_cast<unsigned char>(b[p + 1]) << 8));
}
std::uint32_t get_u32(const std::string& b, std::size_t p) {
  return static_cast<std::uint32_t>(get_u16(b, p)) |
         (static_cast<std::uint32_t>(get_u16(b, p + 2)) << 16);
}
void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xFF));
  b.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& b, std::uint32_t v) {
  put_u16(b, static_cast<std::uint16_t>(v & 0xFFFF));
  put_u16(b, static_cast<std::uint16_t>(v >> 16));
}

}  // namespace

Waveform::Waveform(std::vector<double> s, double rate)
    : samples(std::move(s)), sample_rate(rate) {
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw NonFiniteError("non-finite sample at " + std::to_string(i));
    }
  }
}

std::size_t FrameSpec::len_samples(double rate) const {
  return static_cast<std::size_t>(std::lround(frame_len * rate));
}

std::size_t FrameSpec::shift_samples(double rate) const {
  return static_cast<std::size_t>(std::lround(frame_shift * rate));
}

void FrameSpec::validate() const {
  if (!(frame_shift > 0.0) || frame_shift > frame_len) {
    throw ConfigError("frame spec needs 0 < shift <= len");
  }
}

std::size_t num_frames(std::size_t n, const FrameSpec& spec, double rate) {
  const std::size_t len = spec.len_samples(rate);
  const std::size_t shift = spec.shift_samples(rate);
  if (len == 0 || shift == 0 || n < len) return 0;
  return (n - len) / shift + 1;
}

std::vector<double> hamming_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  }
  return w;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> power_spectrum(std::span<const double> frame,
                                   std::size_t nfft) {
  RealFft fft(nfft);
  std::vector<double> out;
  fft.power(frame, out);
  return out;
}

Waveform decode_wav(const std::string& b, const std::string& source) {
  auto fail = [&](const std::string& what) -> FormatError {
    return FormatError(source + ": " + what);
  };
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 ||
      b.compare(8, 4, "WAVE") != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint32_t rate = 0;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::uint32_t size = get_u32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > b.size()) {
      if (id == "data") throw TruncatedError(source + ": truncated data chunk");
      throw fail("truncated chunk " + id);
    }
    if (id == "fmt ") {
      if (size < 16) throw fail("short fmt chunk");
      const std::uint16_t format = get_u16(b, body);
      const std::uint16_t channels = get_u16(b, body + 2);
      rate = get_u32(b, body + 4);
      const std::uint16_t bits = get_u16(b, body + 14);
      if (format != 1) throw fail("unsupported format (only PCM)");
      if (channels != 1) throw fail("unsupported channel count " + std::to_string(channels));
      if (bits != 16) throw fail("unsupported sample width " + std::to_string(bits) + " bits");
      if (rate == 0) throw fail("zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      std::vector<double> s(size / 2);
      for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = static_cast<std::int16_t>(get_u16(b, body + 2 * i)) / 32768.0;
      }
      return Waveform(std::move(s), rate);
    }
    pos = body + size + (size & 1u);
  }
  throw fail("no data chunk");
}

Waveform read_wav(const std::string& path) {
  return decode_wav(read_file_bytes(path), path);
}

std::string encode_wav(const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  std::string b;
  b.append("RIFF");
  put_u32(b, 36 + 2 * n);
  b.append("WAVEfmt ");
  put_u32(b, 16);
  put_u16(b, 1);
  put_u16(b, 1);
  put_u32(b, rate);
  put_u32(b, rate * 2);
  put_u16(b, 2);
  put_u16(b, 16);
  b.append("data");
  put_u32(b, 2 * n);
  for (double v : w.samples) {
    const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
    put_u16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return b;
}

void write_wav(const Waveform& w, const std::string& path) {
  write_file_bytes(path, encode_wav(w));
}

FeatureMatrix frame_signal(const Waveform& w, const FrameSpec& spec) {
  spec.validate();
  const std::size_t len = spec.len_samples(w.sample_rate);
  const std::size_t shift = spec.shift_samples(w.sample_rate);
  const std::size_t n = num_frames(w.size(), spec, w.sample_rate);
  if (n == 0) {
    throw DataError("waveform of " + std::to_string(w.size()) +
                    " samples is shorter than one frame");
  }
  const auto win = hamming_window(len);
  FeatureMatrix frames(n, len);
  for (std::size_t t = 0; t < n; ++t) {
    auto row = frames.row(t);
    for (std::size_t i = 0; i < len; ++i) {
      row[i] = win[i] * w.samples[t * shift + i];
    }
  }
  return frames;
}

std::vector<double> signal_energy(const FeatureMatrix& frames) {
  std::vector<double> e(frames.rows());
  for (std::size_t t = 0; t < frames.rows(); ++t) e[t] = energy(frames.row(t));
  return e;
}

NoiseTracker::NoiseTracker(std::size_t bins, Mcra2Config cfg)
    : cfg_(cfg),
      smoothed_(bins, 0.0),
      minimum_(bins, 0.0),
      presence_(bins, 0.0),
      noise_(bins, 0.0) {}

const std::vector<double>& NoiseTracker::update(const std::vector<double>& power) {
  if (power.size() != noise_.size()) {
    throw DimensionError("noise tracker bin count mismatch");
  }
  if (!started_) {
    smoothed_ = power;
    minimum_ = power;
    noise_ = power;
    started_ = true;
    return noise_;
  }
  const double a = cfg_.power_smoothing;
  const double beta = cfg_.min_beta;
  const double gamma = cfg_.min_gamma;
  for (std::size_t k = 0; k < power.size(); ++k) {
    const double prev = smoothed_[k];
    const double p = a * prev + (1.0 - a) * power[k];
    smoothed_[k] = p;
    // Continuous minimum tracking: rise slowly, drop immediately.
    if (minimum_[k] < p) {
      minimum_[k] = gamma * minimum_[k] +
                    (1.0 - gamma) / (1.0 - beta) * (p - beta * prev);
      minimum_[k] = std::clamp(minimum_[k], 0.0, p);
    } else {
      minimum_[k] = p;
    }
    const double ratio = p / std::max(minimum_[k], kEnergyFloor);
    const double present = ratio > cfg_.presence_threshold ? 1.0 : 0.0;
    presence_[k] = cfg_.presence_smoothing * presence_[k] +
                   (1.0 - cfg_.presence_smoothing) * present;
    const double alpha_s =
        cfg_.noise_smoothing + (1.0 - cfg_.noise_smoothing) * presence_[k];
    noise_[k] = alpha_s * noise_[k] + (1.0 - alpha_s) * power[k];
  }
  return noise_;
}

std::vector<double> noise_energy_mcra2(const Waveform& w, const FrameSpec& spec,
                                       const Mcra2Config& cfg) {
  const FeatureMatrix frames = frame_signal(w, spec);
  const std::size_t nfft = next_pow2(frames.cols());
  RealFft fft(nfft);
  NoiseTracker tracker(nfft / 2 + 1, cfg);
  std::vector<double> out(frames.rows());
  std::vector<double> power;
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    fft.power(frames.row(t), power);
    out[t] = std::max(one_sided_energy(tracker.update(power), nfft), kEnergyFloor);
  }
  return out;
}

std::vector<double> snr_track(const std::vector<double>& signal,
                              const std::vector<double>& noise) {
  if (signal.size() != noise.size()) {
    throw DimensionError("snr_track: " + std::to_string(signal.size()) +
                         " signal frames vs " + std::to_string(noise.size()) +
                         " noise frames");
  }
  std::vector<double> snr(signal.size());
  for (std::size_t t = 0; t < signal.size(); ++t) {
    if (!(noise[t] > 0.0)) throw DataError("snr_track: non-positive noise energy");
    snr[t] = 10.0 * std::log10(std::max(signal[t], kEnergyFloor) / noise[t]);
  }
  return snr;
}

std::vector<double> soft_vad(const Waveform& w, const FrameSpec& spec,
                             const Band& band) {
  if (!(band.low_hz >= 0.0) || !(band.high_hz > band.low_hz) ||
      band.high_hz > w.sample_rate / 2.0) {
    throw ConfigError("soft VAD band must be a non-empty interval within [0, fs/2]");
  }
  const FeatureMatrix frames = frame_signal(w, spec);
  const std::size_t nfft = next_pow2(frames.cols());
  RealFft fft(nfft);
  std::size_t lo = nfft, hi = 0;
  for (std::size_t k = 0; k <= nfft / 2; ++k) {
    const double f = static_cast<double>(k) * w.sample_rate / static_cast<double>(nfft);
    if (f >= band.low_hz && f <= band.high_hz) {
      lo = std::min(lo, k);
      hi = std::max(hi, k);
    }
  }
  if (lo > hi) throw ConfigError("soft VAD band contains no FFT bin");
  std::vector<double> out(frames.rows());
  std::vector<double> power;
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    fft.power(frames.row(t), power);
    double total = 0.0, in_band = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) {
      total += power[k];
      if (k >= lo && k <= hi) in_band += power[k];
    }
    out[t] = total > 0.0 ? in_band / (total + kPosteriorFloor) : 0.0;
  }
  return out;
}

FeatureMatrix mfcc(const Waveform& w, const FrameSpec& spec,
                   std::size_t n_coeffs, const MfccConfig& cfg) {
  if (n_coeffs > cfg.num_filters) {
    throw ConfigError("n_coeffs " + std::to_string(n_coeffs) +
                      " exceeds filter count " + std::to_string(cfg.num_filters));
  }
  if (w.sample_rate < 8000.0) throw ConfigError("MFCC needs sample rate >= 8 kHz");
  spec.validate();
  const std::size_t len = spec.len_samples(w.sample_rate);
  const std::size_t shift = spec.shift_samples(w.sample_rate);
  const std::size_t n = num_frames(w.size(), spec, w.sample_rate);
  if (n == 0) throw DataError("waveform shorter than one frame");
  const std::size_t nfft = next_pow2(len);
  const std::size_t bins = nfft / 2 + 1;
  const std::size_t m = cfg.num_filters;

  // Triangular filters with centres equally spaced on the mel scale.
  std::vector<double> edges(m + 2);
  const double mel_hi = hz_to_mel(w.sample_rate / 2.0);
  for (std::size_t i = 0; i < m + 2; ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(m + 1));
  }
  FeatureMatrix bank(m, bins);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * w.sample_rate / static_cast<double>(nfft);
      double v = 0.0;
      if (f > edges[j] && f <= edges[j + 1]) {
        v = (f - edges[j]) / (edges[j + 1] - edges[j]);
      } else if (f > edges[j + 1] && f < edges[j + 2]) {
        v = (edges[j + 2] - f) / (edges[j + 2] - edges[j + 1]);
      }
      bank(j, k) = v;
    }
  }
  // Orthonormal DCT-II basis.
  FeatureMatrix dct(n_coeffs, m);
  for (std::size_t c = 0; c < n_coeffs; ++c) {
    const double scale = std::sqrt((c == 0 ? 1.0 : 2.0) / static_cast<double>(m));
    for (std::size_t j = 0; j < m; ++j) {
      dct(c, j) = scale * std::cos(std::numbers::pi * static_cast<double>(c) *
                                   (static_cast<double>(j) + 0.5) /
                                   static_cast<double>(m));
    }
  }

  const auto win = hamming_window(len);
  RealFft fft(nfft);
  FeatureMatrix out(n, std::max<std::size_t>(n_coeffs, 1));
  std::vector<double> frame(len), power, logmel(m);
  for (std::size_t t = 0; t < n; ++t) {
    const double* x = w.samples.data() + t * shift;
    for (std::size_t i = len; i-- > 0;) {
      const double prev = i > 0 ? x[i - 1] : x[0];
      frame[i] = (x[i] - cfg.preemphasis * prev) * win[i];
    }
    fft.power(frame, power);
    for (std::size_t j = 0; j < m; ++j) {
      double e = 0.0;
      auto br = bank.row(j);
      for (std::size_t k = 0; k < bins; ++k) e += br[k] * power[k];
      logmel[j] = std::log(std::max(e, cfg.log_floor));
    }
    for (std::size_t c = 0; c < n_coeffs; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += dct(c, j) * logmel[j];
      out(t, c) = acc;
    }
  }
  return out;
}

FeatureMatrix delta_features(const FeatureMatrix& m, std::size_t context) {
  FeatureMatrix out(m.rows(), m.cols());
  if (m.rows() == 0 || context == 0) return out;
  double denom = 0.0;
  for (std::size_t k = 1; k <= context; ++k) denom += static_cast<double>(k * k);
  denom *= 2.0;
  const auto last = static_cast<std::ptrdiff_t>(m.rows()) - 1;
  for (std::ptrdiff_t t = 0; t <= last; ++t) {
    for (std::size_t k = 1; k <= context; ++k) {
      const auto ki = static_cast<std::ptrdiff_t>(k);
      const auto fwd = static_cast<std::size_t>(std::min(t + ki, last));
      const auto bwd = static_cast<std::size_t>(std::max<std::ptrdiff_t>(t - ki, 0));
      for (std::size_t c = 0; c < m.cols(); ++c) {
        out(static_cast<std::size_t>(t), c) +=
            static_cast<double>(k) * (m(fwd, c) - m(bwd, c));
      }
    }
    for (std::size_t c = 0; c < m.cols(); ++c) out(static_cast<std::size_t>(t), c) /= denom;
  }
  return out;
}

double mixing_gain(double clean_energy, double noise_energy, double target_db) {
  if (!(clean_energy > 0.0) || !(noise_energy > 0.0)) {
    throw DataError("mix_at_snr: zero-energy clean or noise signal");
  }
  return std::sqrt(clean_energy / (noise_energy * std::pow(10.0, target_db / 10.0)));
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise,
                    double target_db, std::uint64_t seed) {
  if (clean.sample_rate != noise.sample_rate) {
    throw DataError("mix_at_snr: sample rates differ");
  }
  if (std::isinf(target_db) && target_db > 0) return clean;
  if (std::isnan(target_db)) throw ConfigError("mix_at_snr: NaN target");
  if (noise.size() == 0) throw DataError("mix_at_snr: empty noise signal");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, noise.size() - 1);
  const std::size_t offset = pick(rng);
  std::vector<double> seg(clean.size());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    seg[i] = noise.samples[(offset + i) % noise.size()];
  }
  const double g = mixing_gain(energy(clean.samples), energy(seg), target_db);
  std::vector<double> out(clean.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = clean.samples[i] + g * seg[i];
  return Waveform(std::move(out), clean.sample_rate);
}

FeatureMatrix audio_reliability_features(const Waveform& w,
                                         const AudioReliabilityConfig& cfg) {
  constexpr std::size_t kKeep = 5;
  const std::size_t need = cfg.mfcc_offset + kKeep;
  const FeatureMatrix cep = mfcc(w, cfg.frames, need, cfg.mfcc);
  FeatureMatrix head(cep.rows(), kKeep);
  for (std::size_t t = 0; t < cep.rows(); ++t) {
    for (std::size_t c = 0; c < kKeep; ++c) head(t, c) = cep(t, cfg.mfcc_offset + c);
  }
  const FeatureMatrix delta = delta_features(head, cfg.delta_context);
  const auto s = signal_energy(frame_signal(w, cfg.frames));
  const auto nn = noise_energy_mcra2(w, cfg.frames, cfg.mcra);
  const auto snr = snr_track(s, nn);
  const auto vad = soft_vad(w, cfg.frames, cfg.vad_band);

  FeatureMatrix out(head.rows(), kAudioReliabilityDim);
  for (std::size_t t = 0; t < head.rows(); ++t) {
    for (std::size_t c = 0; c < kKeep; ++c) {
      out(t, c) = head(t, c);
      out(t, kKeep + c) = delta(t, c);
    }
    out(t, 10) = snr[t];
    out(t, 11) = s[t];
    out(t, 12) = nn[t];
    out(t, 13) = vad[t];
  }
  return out;
}

}  // namespace avfuse
