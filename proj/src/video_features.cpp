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

#include "avfuse/video_features.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "avfuse/matrix_io.hpp"

namespace avfuse {
namespace {

// Rows are frequencies: basis(k, n) = c_k cos(pi k (n + 0.5) / N).
std::vector<double> dct_basis(std::size_t n) {
  std::vector<double> b(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      b[k * n + i] = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                      (static_cast<double>(i) + 0.5) /
                                      static_cast<double>(n));
    }
  }
  return b;
}

// out = rows_basis * in * cols_basis^T, or the transposed-basis inverse.
std::vector<double> separable(const std::vector<double>& in, std::size_t width,
                              std::size_t height, bool inverse) {
  if (in.size() != width * height) throw DimensionError("dct2: size mismatch");
  const auto bw = dct_basis(width);
  const auto bh = dct_basis(height);
  auto bw_at = [&](std::size_t k, std::size_t i) {
    return inverse ? bw[i * width + k] : bw[k * width + i];
  };
  auto bh_at = [&](std::size_t k, std::size_t i) {
    return inverse ? bh[i * height + k] : bh[k * height + i];
  };
  std::vector<double> tmp(width * height, 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t u = 0; u < width; ++u) {
      double acc = 0.0;
      for (std::size_t x = 0; x < width; ++x) acc += bw_at(u, x) * in[y * width + x];
      tmp[y * width + u] = acc;
    }
  }
  std::vector<double> out(width * height, 0.0);
  for (std::size_t v = 0; v < height; ++v) {
    for (std::size_t u = 0; u < width; ++u) {
      double acc = 0.0;
      for (std::size_t y = 0; y < height; ++y) acc += bh_at(v, y) * tmp[y * width + u];
      out[v * width + u] = acc;
    }
  }
  return out;
}

std::string next_token(const std::string& b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(static_cast<unsigned char>(b[pos]))) {
    tok.push_back(b[pos++]);
  }
  return tok;
}

}  // namespace

GrayImage::GrayImage(std::size_t width, std::size_t height,
                     std::vector<double> pixels, std::size_t min_side)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width_ < min_side || height_ < min_side) {
    throw DimensionError("image " + std::to_string(width_) + "x" +
                         std::to_string(height_) + " is too small (min side " +
                         std::to_string(min_side) + ")");
  }
  if (pixels_.size() != width_ * height_) {
    throw DimensionError("image pixel count does not match dimensions");
  }
  for (double p : pixels_) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw DataError("pixel value outside [0,1]");
    }
  }
}

GrayImage GrayImage::mirrored() const {
  std::vector<double> m(pixels_.size());
  for (std::size_t y = 0; y < height_; ++y) {
    for (std::size_t x = 0; x < width_; ++x) {
      m[y * width_ + x] = pixels_[y * width_ + (width_ - 1 - x)];
    }
  }
  return GrayImage(width_, height_, std::move(m), 1);
}

void VideoTrack::validate() const {
  if (!(frame_rate > 0.0)) throw ConfigError("video frame rate must be positive");
  for (const auto& img : images) {
    if (img.width() != images.front().width() ||
        img.height() != images.front().height()) {
      throw DimensionError("video track images differ in size");
    }
  }
}

GrayImage decode_pgm(const std::string& b, const std::string& source) {
  std::size_t pos = 0;
  const std::string magic = next_token(b, pos);
  if (magic != "P5") {
    throw FormatError(source + ": unsupported PGM variant '" + magic +
                      "' (only binary P5)");
  }
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(b, pos));
    h = std::stoul(next_token(b, pos));
    maxval = std::stoul(next_token(b, pos));
  } catch (const std::exception&) {
    throw FormatError(source + ": malformed PGM header");
  }
  if (maxval != 255) {
    throw FormatError(source + ": unsupported maxval " + std::to_string(maxval));
  }
  ++pos;  // single whitespace after maxval
  if (b.size() < pos + w * h) throw TruncatedError(source + ": truncated PGM raster");
  std::vector<double> px(w * h);
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<unsigned char>(b[pos + i]) / 255.0;
  }
  return GrayImage(w, h, std::move(px));
}

GrayImage read_pgm(const std::string& path) {
  return decode_pgm(read_file_bytes(path), path);
}

std::string encode_pgm(const GrayImage& img) {
  std::ostringstream os;
  os << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  std::string b = os.str();
  for (double p : img.pixels()) {
    b.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0))));
  }
  return b;
}

std::vector<double> dct2(const std::vector<double>& pixels, std::size_t width,
                         std::size_t height) {
  return separable(pixels, width, height, false);
}

std::vector<double> idct2(const std::vector<double>& coeffs, std::size_t width,
                          std::size_t height) {
  return separable(coeffs, width, height, true);
}

std::vector<std::pair<std::size_t, std::size_t>> zigzag_order(std::size_t width,
                                                              std::size_t height) {
  std::vector<std::pair<std::size_t, std::size_t>> order;
  order.reserve(width * height);
  for (std::size_t d = 0; d + 1 < width + height; ++d) {
    // Odd diagonals run top-right to bottom-left, even ones the other way.
    const std::size_t r_lo = d >= width ? d - width + 1 : 0;
    const std::size_t r_hi = std::min(d, height - 1);
    if (d % 2 == 1) {
      for (std::size_t r = r_lo; r <= r_hi; ++r) order.emplace_back(r, d - r);
    } else {
      for (std::size_t r = r_hi + 1; r-- > r_lo;) order.emplace_back(r, d - r);
    }
  }
  return order;
}

std::vector<double> dct_coeffs(const GrayImage& img, std::size_t n) {
  if (n > img.width() * img.height()) {
    throw ConfigError("requested more DCT coefficients than pixels");
  }
  const auto c = dct2(img.pixels(), img.width(), img.height());
  const auto order = zigzag_order(img.width(), img.height());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = c[order[i].first * img.width() + order[i].second];
  }
  return out;
}

double brightness(const GrayImage& img) {
  double s = 0.0;
  for (double p : img.pixels()) s += p;
  return s / static_cast<double>(img.pixels().size());
}

double blur_measure(const std::vector<double>& px, std::size_t width,
                    std::size_t height, const Kernel3& k) {
  if (width < 3 || height < 3) throw DimensionError("image smaller than 3x3 kernel");
  const std::size_t n = (width - 2) * (height - 2);
  std::vector<double> resp;
  resp.reserve(n);
  double mean = 0.0;
  for (std::size_t y = 1; y + 1 < height; ++y) {
    for (std::size_t x = 1; x + 1 < width; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          acc += k[dy + 1][dx + 1] * px[(y + dy) * width + (x + dx)];
        }
      }
      resp.push_back(acc);
      mean += acc;
    }
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : resp) var += (r - mean) * (r - mean);
  return var / static_cast<double>(n);
}

double blur_measure(const GrayImage& img, const Kernel3& kernel) {
  return blur_measure(img.pixels(), img.width(), img.height(), kernel);
}

MirrorCorrelation mirror_correlation(const GrayImage& img) {
  const auto& a = img.pixels();
  const std::size_t w = img.width();
  const double mean = brightness(img);
  double sab = 0.0, saa = 0.0, energy = 0.0;
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double u = a[y * w + x] - mean;
      const double v = a[y * w + (w - 1 - x)] - mean;
      sab += u * v;
      saa += u * u;
      energy += a[y * w + x] * a[y * w + x];
    }
  }
  // The mirror has the same mean and variance, so the Pearson denominator is
  // just the image variance.
  if (saa <= 1e-24 * std::max(energy, 1e-276)) return {1.0, true};
  return {std::clamp(sab / saa, -1.0, 1.0), false};
}

std::vector<double> video_reliability_vector(const VideoTrack& track, std::size_t t) {
  if (t >= track.images.size()) {
    throw DimensionError("video frame " + std::to_string(t) + " out of range (" +
                         std::to_string(track.images.size()) + " frames)");
  }
  const GrayImage& img = track.images[t];
  std::vector<double> v = dct_coeffs(img, 5);
  v.push_back(brightness(img));
  v.push_back(blur_measure(img));
  v.push_back(mirror_correlation(img).value);
  return v;
}

FeatureMatrix video_reliability_features(const VideoTrack& track) {
  track.validate();
  FeatureMatrix out(track.images.size(), kVideoReliabilityDim);
  for (std::size_t t = 0; t < track.images.size(); ++t) {
    const auto v = video_reliability_vector(track, t);
    std::copy(v.begin(), v.end(), out.row(t).begin());
  }
  return out;
}

FeatureMatrix ingest_shape_params(const std::string& path) {
  FeatureMatrix m = read_csv_matrix(path);
  if (m.cols() != kShapeParamDim) {
    throw DimensionError(path + ": expected " + std::to_string(kShapeParamDim) +
                         " shape-parameter columns, got " + std::to_string(m.cols()));
  }
  return m;
}

}  // namespace avfuse
