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

#include <numbers>

#include "avfuse/audio_dsp.hpp"
#include "avfuse/errors.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace avfuse;
using namespace avfuse::testing;

namespace {

constexpr double kRate = 16000.0;

Waveform tone(double hz, double seconds, double amp = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(seconds * kRate));
  for (std::size_t n = 0; n < x.size(); ++n) {
    x[n] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(n) / kRate);
  }
  return Waveform(x, kRate);
}

Waveform white(double seconds, double sigma, std::uint64_t seed) {
  std::mt19937_64 r(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> x(static_cast<std::size_t>(seconds * kRate));
  for (auto& v : x) v = g(r);
  return Waveform(x, kRate);
}

double db(double x) { return 10.0 * std::log10(x); }

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

TEST_SUITE("audio_dsp") {

TEST_CASE("wav decoding scales samples and rejects 8-bit files") {
  std::vector<double> x(16000, 0.0);
  x[5] = 32767.0 / 32768.0;
  const std::string bytes = encode_wav(Waveform(x, kRate));
  const Waveform w = decode_wav(bytes);
  CHECK(w.size() == 16000);
  CHECK(w.sample_rate == 16000.0);
  CHECK(w.samples[5] == doctest::Approx(0.99997).epsilon(1e-5));

  std::string eight = bytes;
  eight[34] = 8;  // bits per sample
  CHECK_THROWS_AS(decode_wav(eight), DataError);

  const std::string dir = temp_dir("wav");
  write_wav(w, dir + "/a.wav");
  CHECK(read_wav(dir + "/a.wav").samples == w.samples);
}

TEST_CASE("framing counts and window") {
  const FrameSpec spec;
  const FeatureMatrix f = frame_signal(Waveform(std::vector<double>(16000, 0.0), kRate), spec);
  CHECK(f.rows() == 98);  // floor((16000 - 400) / 160) + 1
  CHECK(f.cols() == 400);

  const FeatureMatrix ones = frame_signal(Waveform(std::vector<double>(1000, 1.0), kRate), spec);
  const auto win = hamming_window(400);
  for (std::size_t t = 0; t < ones.rows(); ++t) {
    for (std::size_t i = 0; i < 400; ++i) CHECK(ones(t, i) == win[i]);
  }

  const FrameSpec flat{0.025, 0.025};
  CHECK(frame_signal(Waveform(std::vector<double>(800, 0.1), kRate), flat).rows() == 2);
  CHECK(num_frames(399, spec, kRate) == 0);
  CHECK_THROWS_AS((FrameSpec{0.01, 0.02}.validate()), ConfigError);
}

TEST_CASE("signal energy") {
  CHECK(signal_energy(FeatureMatrix(1, 4, 0.0))[0] == 0.0);
  CHECK(signal_energy(FeatureMatrix::FromRows({{1, -1}}))[0] == 2.0);
  const auto m = random_matrix(10, 400);
  const auto e = signal_energy(m);
  for (std::size_t t = 0; t < 10; ++t) {
    double ref = 0.0;
    for (std::size_t i = 400; i-- > 0;) ref += m(t, i) * m(t, i);
    CHECK(rel_diff(e[t], ref, 1e-300) <= 1e-12);
    CHECK(e[t] >= 0.0);
  }
}

TEST_CASE("mcra2 converges on stationary white noise within 3 dB") {
  const double sigma = 0.05;
  const Waveform w = white(2.0, sigma, 11);
  const FrameSpec spec;
  const auto n = noise_energy_mcra2(w, spec);
  const auto win = hamming_window(spec.len_samples(kRate));
  const double true_power = sigma * sigma * energy(win);
  const std::size_t last = static_cast<std::size_t>(0.5 / spec.frame_shift);
  double mean = 0.0;
  for (std::size_t t = n.size() - last; t < n.size(); ++t) mean += n[t];
  mean /= static_cast<double>(last);
  CHECK(std::abs(db(mean) - db(true_power)) <= 3.0);
  for (double v : n) CHECK(v > 0.0);
}

TEST_CASE("mcra2 on silence stays at the floor") {
  const auto n = noise_energy_mcra2(Waveform(std::vector<double>(16000, 0.0), kRate), FrameSpec{});
  for (double v : n) {
    CHECK(v <= 1e-12);
    CHECK(v > 0.0);
  }
}

TEST_CASE("mcra2 estimate resists a tone burst") {
  Waveform w = white(3.0, 0.02, 5);
  const Waveform t = tone(1000.0, 3.0, 0.5);
  for (std::size_t i = 16000; i < 32000; ++i) w.samples[i] += t.samples[i];
  const auto n = noise_energy_mcra2(w, FrameSpec{});
  double pre = 0.0;
  for (std::size_t k = 80; k < 98; ++k) pre += n[k];
  pre /= 18.0;
  for (std::size_t k = 102; k < 196; ++k) CHECK(std::abs(db(n[k]) - db(pre)) <= 5.0);
}

TEST_CASE("snr track") {
  CHECK(snr_track({2.0}, {2.0})[0] == 0.0);
  CHECK(snr_track({10.0}, {1.0})[0] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(std::abs(snr_track({4.0}, {1.0})[0] - 6.0206) < 1e-4);
  std::vector<double> s;
  for (int i = 0; i < 50; ++i) s.push_back(uniform(1e-6, 1e3));
  for (double v : snr_track(s, s)) CHECK(v == 0.0);
  CHECK_THROWS_AS(snr_track({1.0, 2.0}, {1.0}), DimensionError);
}

TEST_CASE("soft vad on tones and silence") {
  const FrameSpec spec;
  for (double v : soft_vad(tone(1000.0, 0.5), spec)) CHECK(v >= 0.95);
  for (double v : soft_vad(tone(6000.0, 0.5), spec)) CHECK(v <= 0.05);
  for (double v : soft_vad(Waveform(std::vector<double>(8000, 0.0), kRate), spec)) CHECK(v == 0.0);
  for (double v : soft_vad(white(0.5, 0.1, 3), spec)) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(soft_vad(tone(1000.0, 0.1), spec, Band{4000, 300}), ConfigError);
}

TEST_CASE("mfcc frame count matches framing") {
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = uniform_int(400, 9000);
    const Waveform w(std::vector<double>(n, 0.01), kRate);
    CHECK(mfcc(w, FrameSpec{}).rows() == frame_signal(w, FrameSpec{}).rows());
  }
}

TEST_CASE("mfcc of silence is the log-floor image") {
  const FeatureMatrix m = mfcc(Waveform(std::vector<double>(4000, 0.0), kRate), FrameSpec{});
  // Every log-mel value is ln(1e-10); the orthonormal DCT keeps only c0.
  const double c0 = std::sqrt(23.0) * std::log(1e-10);
  for (std::size_t t = 0; t < m.rows(); ++t) {
    CHECK(m(t, 0) == doctest::Approx(c0).epsilon(1e-12));
    for (std::size_t c = 1; c < 13; ++c) CHECK(std::abs(m(t, c)) < 1e-9);
  }
}

TEST_CASE("mfcc of a 1 kHz tone matches the frozen reference") {
  // Frame 3 of a 0.1 s, amplitude 0.5 tone; from tests/oracles/mfcc_reference.py.
  const double golden[13] = {-20.088553764806, 3.278847742678,  -7.436613167576,
                             -8.324368309600,  -2.462336252618, 3.809140049036,
                             5.084593779485,   0.970590283409,  -3.528699505689,
                             -3.940584561472,  -0.284140840719, 3.182751012042,
                             3.038165286828};
  const FeatureMatrix m = mfcc(tone(1000.0, 0.1), FrameSpec{});
  REQUIRE(m.rows() == 8);
  for (std::size_t c = 0; c < 13; ++c) CHECK(std::abs(m(3, c) - golden[c]) < 1e-8);
}

TEST_CASE("delta features") {
  const auto zero = delta_features(FeatureMatrix(6, 3, 2.5));
  for (double v : zero.data()) CHECK(v == 0.0);
  const auto single = delta_features(FeatureMatrix::FromRows({{1, 2, 3}}));
  for (double v : single.data()) CHECK(v == 0.0);

  FeatureMatrix ramp(10, 1);
  for (std::size_t t = 0; t < 10; ++t) ramp(t, 0) = static_cast<double>(t);
  const auto d = delta_features(ramp);
  for (std::size_t t = 2; t < 8; ++t) CHECK(d(t, 0) == doctest::Approx(1.0).epsilon(1e-14));

  const auto m = random_matrix(15, 4);
  FeatureMatrix scaled = m;
  for (auto& v : scaled.data()) v *= -3.7;
  const auto dm = delta_features(m);
  const auto ds = delta_features(scaled);
  for (std::size_t i = 0; i < dm.data().size(); ++i) {
    CHECK(std::abs(ds.data()[i] - -3.7 * dm.data()[i]) <= 1e-12);
  }
}

TEST_CASE("mixing gain and clean passthrough") {
  CHECK(mixing_gain(4.0, 1.0, 0.0) == doctest::Approx(2.0).epsilon(1e-15));
  const Waveform clean = tone(440.0, 0.2);
  const Waveform noise = white(0.5, 0.1, 1);
  CHECK(mix_at_snr(clean, noise, kCleanSnr, 3).samples == clean.samples);
}

TEST_CASE("mix_at_snr realizes the target SNR within 0.01 dB") {
  for (int trial = 0; trial < 100; ++trial) {
    const Waveform clean = white(uniform(0.1, 0.5), uniform(0.01, 1.0), 100 + trial);
    const Waveform noise = white(uniform(0.05, 0.8), uniform(0.01, 1.0), 900 + trial);
    const double target = uniform(-15.0, 20.0);
    const Waveform mix = mix_at_snr(clean, noise, target, static_cast<std::uint64_t>(trial));
    REQUIRE(mix.size() == clean.size());
    std::vector<double> added(mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i) added[i] = mix.samples[i] - clean.samples[i];
    CHECK(std::abs(db(energy(clean.samples) / energy(added)) - target) <= 0.01);
  }
}

TEST_CASE("audio reliability block shape and ranges") {
  Waveform w = white(1.0, 0.05, 9);
  const Waveform t = tone(700.0, 1.0, 0.3);
  for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] += t.samples[i];
  const FeatureMatrix f = audio_reliability_features(w);
  CHECK(f.rows() == frame_signal(w, FrameSpec{}).rows());
  CHECK(f.cols() == kAudioReliabilityDim);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    CHECK(f(r, 11) >= 0.0);  // S
    CHECK(f(r, 12) > 0.0);   // N
    CHECK(f(r, 13) >= 0.0);
    CHECK(f(r, 13) <= 1.0);
  }
}

}  // TEST_SUITE
