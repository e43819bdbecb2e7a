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

#include "avfuse/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace avfuse {

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (cols == 0) throw DimensionError("FeatureMatrix needs at least 1 column");
  if (!std::isfinite(fill)) throw NonFiniteError("non-finite fill value");
}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols,
                             std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (cols == 0) throw DimensionError("FeatureMatrix needs at least 1 column");
  if (data_.size() != rows * cols) {
    std::ostringstream os;
    os << "FeatureMatrix data length " << data_.size() << " != " << rows
       << "x" << cols;
    throw DimensionError(os.str());
  }
  check_finite();
}

FeatureMatrix FeatureMatrix::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<std::vector<double>> v;
  for (const auto& r : rows) v.emplace_back(r);
  return FromRows(v);
}

FeatureMatrix FeatureMatrix::FromRows(
    const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return FeatureMatrix();
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) {
      throw DimensionError("ragged row " + std::to_string(r));
    }
    data.insert(data.end(), rows[r].begin(), rows[r].end());
  }
  return FeatureMatrix(rows.size(), cols, std::move(data));
}

FeatureMatrix FeatureMatrix::slice_rows(std::size_t begin,
                                        std::size_t end) const {
  if (begin > end || end > rows_) throw DimensionError("row slice out of range");
  std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                        data_.begin() + static_cast<std::ptrdiff_t>(end * cols_));
  return FeatureMatrix(end - begin, cols_, std::move(d));
}

void FeatureMatrix::check_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      std::ostringstream os;
      os << "non-finite value at row " << i / cols_ << ", col " << i % cols_;
      throw NonFiniteError(os.str());
    }
  }
}

FeatureMatrix vstack(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.cols() != b.cols()) throw DimensionError("vstack: column mismatch");
  std::vector<double> d(a.data().begin(), a.data().end());
  d.insert(d.end(), b.data().begin(), b.data().end());
  return FeatureMatrix(a.rows() + b.rows(), a.cols(), std::move(d));
}

std::string_view stream_name(StreamId id) {
  switch (id) {
    case StreamId::kA:
      return "A";
    case StreamId::kVA:
      return "VA";
    case StreamId::kVS:
      return "VS";
  }
  return "?";
}

PosteriorStream validate_posteriors(const FeatureMatrix& m) {
  m.check_finite();
  FeatureMatrix probs(m.rows(), m.cols());
  FeatureMatrix logs(m.rows(), m.cols());
  for (std::size_t t = 0; t < m.rows(); ++t) {
    auto in = m.row(t);
    double raw = 0.0;
    for (double v : in) {
      if (v < 0.0) {
        throw DegenerateFrameError(
            "negative posterior in frame " + std::to_string(t), t);
      }
      raw += v;
    }
    if (raw <= 0.0) {
      throw DegenerateFrameError("all-zero posterior row at frame " +
                                     std::to_string(t),
                                 t);
    }
    auto out = probs.row(t);
    double sum = 0.0;
    for (std::size_t s = 0; s < in.size(); ++s) {
      out[s] = std::max(in[s] / raw, kPosteriorFloor);
      sum += out[s];
    }
    auto lout = logs.row(t);
    for (std::size_t s = 0; s < out.size(); ++s) {
      out[s] /= sum;
      lout[s] = std::log(out[s]);
    }
  }
  return PosteriorStream(std::move(probs), std::move(logs),
                         PosteriorDomain::kProbability);
}

PosteriorStream PosteriorStream::FromLog(const FeatureMatrix& log_probs) {
  log_probs.check_finite();
  FeatureMatrix probs(log_probs.rows(), log_probs.cols());
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    double sum = 0.0;
    for (std::size_t s = 0; s < log_probs.cols(); ++s) {
      probs(t, s) = std::exp(log_probs(t, s));
      sum += probs(t, s);
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw DegenerateFrameError(
          "log-posterior row " + std::to_string(t) + " does not normalize", t);
    }
  }
  PosteriorStream out(std::move(probs), log_probs,
                      PosteriorDomain::kLogProbability);
  return out;
}

StreamBundle::StreamBundle(PosteriorStream a, PosteriorStream va,
                           PosteriorStream vs)
    : streams_{std::move(a), std::move(va), std::move(vs)} {
  for (std::size_t i = 1; i < kNumStreams; ++i) {
    if (streams_[i].frames() != streams_[0].frames()) {
      throw DimensionError("stream " +
                           std::string(stream_name(kStreamOrder[i])) +
                           " has " + std::to_string(streams_[i].frames()) +
                           " frames, expected " +
                           std::to_string(streams_[0].frames()));
    }
    if (streams_[i].states() != streams_[0].states()) {
      throw DimensionError("stream " +
                           std::string(stream_name(kStreamOrder[i])) +
                           " has " + std::to_string(streams_[i].states()) +
                           " states, expected " +
                           std::to_string(streams_[0].states()));
    }
  }
}

StreamBundle StreamBundle::slice(std::size_t begin, std::size_t end) const {
  auto cut = [&](const PosteriorStream& p) {
    return PosteriorStream::FromLog(p.log_probs().slice_rows(begin, end));
  };
  return StreamBundle(cut(streams_[0]), cut(streams_[1]), cut(streams_[2]));
}

TargetAlignment::TargetAlignment(std::vector<int> states,
                                 std::size_t num_states)
    : states_(std::move(states)), num_states_(num_states) {
  if (num_states_ == 0) throw DimensionError("TargetAlignment with 0 states");
  for (std::size_t t = 0; t < states_.size(); ++t) {
    if (states_[t] < 0 || static_cast<std::size_t>(states_[t]) >= num_states_) {
      throw DimensionError("target state " + std::to_string(states_[t]) +
                           " at frame " + std::to_string(t) +
                           " outside [0, " + std::to_string(num_states_) + ")");
    }
  }
}

TargetAlignment TargetAlignment::slice(std::size_t begin,
                                       std::size_t end) const {
  if (begin > end || end > states_.size()) {
    throw DimensionError("target slice out of range");
  }
  return TargetAlignment(
      std::vector<int>(states_.begin() + static_cast<std::ptrdiff_t>(begin),
                       states_.begin() + static_cast<std::ptrdiff_t>(end)),
      num_states_);
}

StreamWeights::StreamWeights(FeatureMatrix m) : m_(std::move(m)) {
  if (m_.cols() != kNumStreams) {
    throw DimensionError("StreamWeights needs 3 columns, got " +
                         std::to_string(m_.cols()));
  }
  for (std::size_t t = 0; t < m_.rows(); ++t) {
    for (double v : m_.row(t)) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DataError("stream weight outside [0,1] at frame " +
                        std::to_string(t));
      }
    }
  }
}

StreamWeights StreamWeights::Constant(std::size_t frames,
                                      std::array<double, kNumStreams> w) {
  FeatureMatrix m(frames, kNumStreams);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < kNumStreams; ++i) m(t, i) = w[i];
  }
  return StreamWeights(std::move(m));
}

bool StreamWeights::all_zero(std::size_t t) const {
  auto r = m_.row(t);
  return std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; });
}

}  // namespace avfuse
