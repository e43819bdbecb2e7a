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

// Shared numeric containers and stream identities.

#ifndef AVFUSE_CORE_HPP_
#define AVFUSE_CORE_HPP_

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avfuse/errors.hpp"

namespace avfuse {

/// Floor applied to every posterior before a logarithm is taken.
inline constexpr double kPosteriorFloor = 1e-10;

/// Dense row-major matrix of doubles. Rows are frames, columns are feature
/// dimensions. Values passed in through the constructors are checked for
/// finiteness.
class FeatureMatrix {
 public:
  FeatureMatrix() : rows_(0), cols_(1) {}
  FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static FeatureMatrix FromRows(
      std::initializer_list<std::initializer_list<double>> rows);
  static FeatureMatrix FromRows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  /// Rows [begin, end) as a new matrix.
  FeatureMatrix slice_rows(std::size_t begin, std::size_t end) const;

  /// Throws NonFiniteError naming the first offending cell.
  void check_finite() const;

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

/// Appends the rows of `b` below `a`. Column counts must agree.
FeatureMatrix vstack(const FeatureMatrix& a, const FeatureMatrix& b);

enum class StreamId { kA = 0, kVA = 1, kVS = 2 };

inline constexpr std::size_t kNumStreams = 3;
inline constexpr std::array<StreamId, kNumStreams> kStreamOrder = {
    StreamId::kA, StreamId::kVA, StreamId::kVS};

std::string_view stream_name(StreamId id);

enum class PosteriorDomain { kProbability, kLogProbability };

/// Per-frame state posteriors of one stream. Always holds both the floored,
/// normalized probabilities and their natural logarithms.
class PosteriorStream {
 public:
  PosteriorStream() = default;

  /// Builds from log-posteriors. Rows must exponentiate to distributions
  /// summing to one within 1e-9.
  static PosteriorStream FromLog(const FeatureMatrix& log_probs);

  const FeatureMatrix& probs() const { return probs_; }
  const FeatureMatrix& log_probs() const { return log_probs_; }
  PosteriorDomain domain() const { return domain_; }
  std::size_t frames() const { return probs_.rows(); }
  std::size_t states() const { return probs_.cols(); }

 private:
  friend PosteriorStream validate_posteriors(const FeatureMatrix& m);
  PosteriorStream(FeatureMatrix probs, FeatureMatrix log_probs,
                  PosteriorDomain domain)
      : probs_(std::move(probs)),
        log_probs_(std::move(log_probs)),
        domain_(domain) {}

  FeatureMatrix probs_;
  FeatureMatrix log_probs_;
  PosteriorDomain domain_ = PosteriorDomain::kProbability;
};

/// Floors entries at kPosteriorFloor and renormalizes each row to sum one.
/// Negative entries or an all-zero row raise DegenerateFrameError.
PosteriorStream validate_posteriors(const FeatureMatrix& m);

/// The three synchronized posterior streams in fixed order (A, VA, VS).
class StreamBundle {
 public:
  StreamBundle(PosteriorStream a, PosteriorStream va, PosteriorStream vs);

  const PosteriorStream& stream(StreamId id) const {
    return streams_[static_cast<std::size_t>(id)];
  }
  const PosteriorStream& operator[](std::size_t i) const {
    return streams_[i];
  }
  std::size_t frames() const { return streams_[0].frames(); }
  std::size_t states() const { return streams_[0].states(); }

  /// Frames [begin, end) of every stream.
  StreamBundle slice(std::size_t begin, std::size_t end) const;

 private:
  std::array<PosteriorStream, kNumStreams> streams_;
};

/// Per-frame reference states; frame t has one-hot target at states[t].
class TargetAlignment {
 public:
  TargetAlignment(std::vector<int> states, std::size_t num_states);

  const std::vector<int>& states() const { return states_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t frames() const { return states_.size(); }
  int operator[](std::size_t t) const { return states_[t]; }

  TargetAlignment slice(std::size_t begin, std::size_t end) const;

 private:
  std::vector<int> states_;
  std::size_t num_states_;
};

/// T x 3 matrix of per-frame stream weights, every entry in [0, 1].
class StreamWeights {
 public:
  explicit StreamWeights(FeatureMatrix m);
  /// The same weight triple repeated for `frames` frames.
  static StreamWeights Constant(std::size_t frames,
                                std::array<double, kNumStreams> w);

  const FeatureMatrix& matrix() const { return m_; }
  std::size_t frames() const { return m_.rows(); }
  double operator()(std::size_t t, std::size_t i) const { return m_(t, i); }
  /// True when frame t has all three weights equal to zero.
  bool all_zero(std::size_t t) const;

 private:
  FeatureMatrix m_;
};

}  // namespace avfuse

#endif  // AVFUSE_CORE_HPP_
