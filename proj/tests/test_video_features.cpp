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

#include "avfuse/errors.hpp"
#include "avfuse/matrix_io.hpp"
#include "avfuse/video_features.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace avfuse;
using namespace avfuse::testing;

namespace {

GrayImage random_image(std::size_t w, std::size_t h) {
  std::vector<double> p(w * h);
  for (auto& v : p) v = uniform(0.0, 1.0);
  return GrayImage(w, h, p);
}

std::string pgm_bytes(std::size_t w, std::size_t h, int maxval, unsigned char fill) {
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
                  std::to_string(maxval) + "\n";
  s.append(w * h * (maxval > 255 ? 2 : 1), static_cast<char>(fill));
  return s;
}

// Variance of the valid-region Laplacian response, by direct convolution.
double laplacian_variance(const std::vector<double>& p, std::size_t w, std::size_t h) {
  std::vector<double> r;
  for (std::size_t y = 1; y + 1 < h; ++y) {
    for (std::size_t x = 1; x + 1 < w; ++x) {
      r.push_back(p[(y - 1) * w + x] + p[(y + 1) * w + x] + p[y * w + x - 1] +
                  p[y * w + x + 1] - 4.0 * p[y * w + x]);
    }
  }
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double var = 0.0;
  for (double v : r) var += (v - mean) * (v - mean);
  return var / static_cast<double>(r.size());
}

}  // namespace

TEST_SUITE("video_features") {

TEST_CASE("pgm decoding") {
  const GrayImage img = decode_pgm(pgm_bytes(16, 16, 255, 255));
  for (double v : img.pixels()) CHECK(v == 1.0);
  CHECK_THROWS_AS(decode_pgm(pgm_bytes(16, 16, 65535, 1)), DataError);
  CHECK_THROWS_AS(decode_pgm(pgm_bytes(4, 16, 255, 1)), DataError);
  const GrayImage r = random_image(9, 12);
  const GrayImage back = decode_pgm(encode_pgm(r));
  for (std::size_t i = 0; i < r.pixels().size(); ++i) {
    CHECK(std::abs(back.pixels()[i] - r.pixels()[i]) <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("dct of a constant image and of a 2x2 impulse") {
  const double c = 0.37;
  const GrayImage img(12, 10, std::vector<double>(120, c));
  const auto d = dct_coeffs(img, 5);
  CHECK(d[0] == doctest::Approx(c * std::sqrt(120.0)).epsilon(1e-12));
  for (std::size_t k = 1; k < 5; ++k) CHECK(std::abs(d[k]) < 1e-9);

  const auto full = dct2({1, 0, 0, 0}, 2, 2);
  CHECK(std::abs(full[0] - 0.5) < 1e-15);
}

TEST_CASE("dct round trip and linearity") {
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t w = uniform_int(1, 20), h = uniform_int(1, 20);
    std::vector<double> p(w * h), q(w * h);
    for (auto& v : p) v = uniform(0, 1);
    for (auto& v : q) v = uniform(0, 1);
    const auto back = idct2(dct2(p, w, h), w, h);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(back[i] - p[i]) < 1e-9);

    std::vector<double> mix(w * h);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.0 * p[i] - 0.5 * q[i];
    const auto dp = dct2(p, w, h), dq = dct2(q, w, h), dm = dct2(mix, w, h);
    for (std::size_t i = 0; i < mix.size(); ++i) CHECK(std::abs(dm[i] - (2.0 * dp[i] - 0.5 * dq[i])) < 1e-12);
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= static_cast<double>(p.size());
    CHECK(std::abs(dp[0] - mean * std::sqrt(static_cast<double>(w * h))) < 1e-12);
  }
}

TEST_CASE("zigzag starts like JPEG") {
  const auto z = zigzag_order(8, 8);
  REQUIRE(z.size() == 64);
  const std::vector<std::pair<std::size_t, std::size_t>> head = {{0, 0}, {0, 1}, {1, 0}, {2, 0}, {1, 1}, {0, 2}};
  for (std::size_t i = 0; i < head.size(); ++i) CHECK(z[i] == head[i]);
}

TEST_CASE("brightness") {
  CHECK(brightness(GrayImage(8, 8, std::vector<double>(64, 0.0))) == 0.0);
  CHECK(brightness(GrayImage(8, 8, std::vector<double>(64, 1.0))) == 1.0);
  std::vector<double> half(64, 0.0);
  std::fill(half.begin() + 32, half.end(), 1.0);
  CHECK(brightness(GrayImage(8, 8, half)) == 0.5);
}

TEST_CASE("blur measure") {
  CHECK(blur_measure(GrayImage(10, 10, std::vector<double>(100, 0.3))) == 0.0);

  std::vector<double> checker(16 * 16), boxed(16 * 16, 0.0);
  for (std::size_t y = 0; y < 16; ++y) {
    for (std::size_t x = 0; x < 16; ++x) checker[y * 16 + x] = (x + y) % 2 ? 1.0 : 0.0;
  }
  for (std::size_t y = 0; y < 16; ++y) {
    for (std::size_t x = 0; x < 16; ++x) {
      double s = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = static_cast<int>(x) + dx, yy = static_cast<int>(y) + dy;
          if (xx < 0 || yy < 0 || xx >= 16 || yy >= 16) continue;
          s += checker[static_cast<std::size_t>(yy) * 16 + static_cast<std::size_t>(xx)];
          ++n;
        }
      }
      boxed[y * 16 + x] = s / n;
    }
  }
  CHECK(blur_measure(GrayImage(16, 16, checker)) > blur_measure(GrayImage(16, 16, boxed)));

  std::vector<double> impulse(20 * 20, 0.0);
  impulse[10 * 20 + 10] = 1.0;
  const double v = blur_measure(GrayImage(20, 20, impulse));
  CHECK(v > 0.0);
  // 18x18 valid responses: one -4, four +1, the rest 0, so the mean is 0.
  const double hand = (16.0 + 4.0) / 324.0;
  CHECK(v == doctest::Approx(hand).epsilon(1e-12));
  CHECK(v == doctest::Approx(laplacian_variance(impulse, 20, 20)).epsilon(1e-12));

  const GrayImage r = random_image(14, 11);
  std::vector<double> shifted = r.pixels();
  for (auto& p : shifted) p += 0.25;
  CHECK(blur_measure(shifted, 14, 11) == doctest::Approx(blur_measure(r)).epsilon(1e-12));
}

TEST_CASE("mirror correlation") {
  std::vector<double> sym(10 * 8);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 5; ++x) {
      const double v = uniform(0, 1);
      sym[y * 10 + x] = v;
      sym[y * 10 + 9 - x] = v;
    }
  }
  CHECK(std::abs(mirror_correlation(GrayImage(10, 8, sym)).value - 1.0) < 1e-12);

  std::vector<double> anti(10 * 8);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 5; ++x) {
      const double v = uniform(-0.5, 0.5);
      anti[y * 10 + x] = 0.5 + v;
      anti[y * 10 + 9 - x] = 0.5 - v;
    }
  }
  CHECK(std::abs(mirror_correlation(GrayImage(10, 8, anti)).value + 1.0) < 1e-12);

  for (int trial = 0; trial < 50; ++trial) {
    const GrayImage img = random_image(uniform_int(8, 20), uniform_int(8, 20));
    const double c = mirror_correlation(img).value;
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(mirror_correlation(img.mirrored()).value == doctest::Approx(c).epsilon(1e-12));
  }
  const auto flat = mirror_correlation(GrayImage(8, 8, std::vector<double>(64, 0.2)));
  CHECK(flat.zero_variance);
  CHECK(flat.value == 1.0);
}

TEST_CASE("video reliability vector") {
  const double c = 0.6;
  const GrayImage img(16, 12, std::vector<double>(192, c));
  const VideoTrack track{{img, img}, 25.0};
  const auto v = video_reliability_vector(track, 0);
  REQUIRE(v.size() == kVideoReliabilityDim);
  CHECK(v[0] == doctest::Approx(c * std::sqrt(192.0)).epsilon(1e-12));
  for (std::size_t k = 1; k < 5; ++k) CHECK(std::abs(v[k]) < 1e-9);
  CHECK(v[5] == doctest::Approx(c));
  CHECK(v[6] == 0.0);
  CHECK(v[7] == 1.0);
  CHECK(video_reliability_vector(track, 1) == v);

  const GrayImage r = random_image(16, 16);
  const VideoTrack rt{{r, r, random_image(16, 16)}, 25.0};
  const FeatureMatrix f = video_reliability_features(rt);
  CHECK(f.rows() == 3);
  CHECK(f.cols() == 8);
  for (std::size_t k = 0; k < 8; ++k) CHECK(f(0, k) == f(1, k));
  CHECK_THROWS_AS((VideoTrack{{r, random_image(8, 8)}, 25.0}.validate()), DataError);
}

TEST_CASE("shape parameter ingest") {
  const std::string dir = temp_dir("shape");
  const auto m = random_matrix(10, 34);
  write_csv_matrix(m, dir + "/ok.csv");
  const auto back = ingest_shape_params(dir + "/ok.csv");
  CHECK(back.rows() == 10);
  CHECK(back == m);
  write_csv_matrix(random_matrix(10, 33), dir + "/bad.csv");
  CHECK_THROWS_AS(ingest_shape_params(dir + "/bad.csv"), DimensionError);
}

}  // TEST_SUITE
