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

// Video-based reliability cues computed from grayscale mouth-region images.
//
// The "IDCT" cue is the leading block of forward orthonormal 2-D DCT-II
// coefficients, taken in JPEG zigzag order from the DC term.

#ifndef AVFUSE_VIDEO_FEATURES_HPP_
#define AVFUSE_VIDEO_FEATURES_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "avfuse/core.hpp"

namespace avfuse {

inline constexpr std::size_t kMinImageSide = 8;
inline constexpr std::size_t kShapeParamDim = 34;
inline constexpr std::size_t kVideoReliabilityDim = 8;

class GrayImage {
 public:
  /// Pixels row-major in [0, 1]. Sides below `min_side` are rejected.
  GrayImage(std::size_t width, std::size_t height, std::vector<double> pixels,
            std::size_t min_side = kMinImageSide);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
  const std::vector<double>& pixels() const { return pixels_; }

  GrayImage mirrored() const;

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<double> pixels_;
};

struct VideoTrack {
  std::vector<GrayImage> images;
  double frame_rate = 25.0;

  /// Checks that every image has the same dimensions.
  void validate() const;
};

/// Binary PGM (P5) with maxval 255.
GrayImage read_pgm(const std::string& path);
GrayImage decode_pgm(const std::string& bytes, const std::string& source = "<memory>");
std::string encode_pgm(const GrayImage& img);

/// Full orthonormal 2-D DCT-II, laid out like the image (row = vertical
/// frequency). Works on any side length >= 1.
std::vector<double> dct2(const std::vector<double>& pixels, std::size_t width,
                         std::size_t height);
/// Inverse of dct2.
std::vector<double> idct2(const std::vector<double>& coeffs, std::size_t width,
                          std::size_t height);

/// (row, col) pairs of a width x height grid in zigzag order.
std::vector<std::pair<std::size_t, std::size_t>> zigzag_order(std::size_t width,
                                                              std::size_t height);

std::vector<double> dct_coeffs(const GrayImage& img, std::size_t n = 5);

double brightness(const GrayImage& img);

using Kernel3 = std::array<std::array<double, 3>, 3>;
inline constexpr Kernel3 kLaplacian = {{{0, 1, 0}, {1, -4, 1}, {0, 1, 0}}};

/// Variance of the valid-region response to a 3x3 high-pass kernel.
double blur_measure(const GrayImage& img, const Kernel3& kernel = kLaplacian);
double blur_measure(const std::vector<double>& pixels, std::size_t width,
                    std::size_t height, const Kernel3& kernel = kLaplacian);

struct MirrorCorrelation {
  double value = 1.0;
  bool zero_variance = false;  // value forced to 1
};

/// Pearson correlation between the image and its left-right mirror.
MirrorCorrelation mirror_correlation(const GrayImage& img);

/// [dct_coeffs(5), brightness, blur, mirror correlation] for frame t.
std::vector<double> video_reliability_vector(const VideoTrack& track, std::size_t t);

/// One row per video frame.
FeatureMatrix video_reliability_features(const VideoTrack& track);

/// CSV with exactly 34 columns of non-rigid shape parameters.
FeatureMatrix ingest_shape_params(const std::string& path);

}  // namespace avfuse

#endif  // AVFUSE_VIDEO_FEATURES_HPP_
