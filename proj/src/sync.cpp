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

#include "avfuse/sync.hpp"

#include <algorithm>

namespace avfuse {

std::vector<std::size_t> dda_indices(std::size_t src_len, const RatePair& rates,
                                     std::size_t dst_len) {
  if (rates.src_rate == 0 || rates.dst_rate == 0) {
    throw ConfigError("frame rates must be positive");
  }
  if (src_len == 0) throw DataError("dda_indices: empty source");
  std::vector<std::size_t> idx(dst_len);
  // Invariant: index * dst + err == t * src, 0 <= err < dst.
  std::uint64_t index = 0;
  std::uint64_t err = 0;
  const std::uint64_t src = rates.src_rate;
  const std::uint64_t dst = rates.dst_rate;
  for (std::size_t t = 0; t < dst_len; ++t) {
    idx[t] = std::min<std::size_t>(index, src_len - 1);
    err += src;
    while (err >= dst) {
      err -= dst;
      ++index;
    }
  }
  return idx;
}

FeatureMatrix resample_features(const FeatureMatrix& m, const RatePair& rates,
                                std::size_t dst_len) {
  if (m.rows() == 0) throw DataError("resample_features: empty matrix");
  const auto idx = dda_indices(m.rows(), rates, dst_len);
  FeatureMatrix out(dst_len, m.cols());
  for (std::size_t t = 0; t < dst_len; ++t) {
    auto src = m.row(idx[t]);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

FeatureMatrix early_concat(const FeatureMatrix& audio, const FeatureMatrix& vs,
                           const FeatureMatrix& va, const RatePair& rates) {
  if (audio.rows() == 0) throw DataError("early_concat: empty audio stream");
  if (vs.rows() == 0 && va.rows() == 0) return audio;
  if (vs.rows() == 0) throw DataError("early_concat: empty VS stream");
  if (va.rows() == 0) throw DataError("early_concat: empty VA stream");
  const std::size_t t_len = audio.rows();
  const FeatureMatrix vs_up = resample_features(vs, rates, t_len);
  const FeatureMatrix va_up = resample_features(va, rates, t_len);
  FeatureMatrix out(t_len, audio.cols() + vs.cols() + va.cols());
  for (std::size_t t = 0; t < t_len; ++t) {
    auto o = out.row(t).begin();
    for (auto* part : {&audio, &vs_up, &va_up}) {
      auto r = part->row(t);
      o = std::copy(r.begin(), r.end(), o);
    }
  }
  return out;
}

}  // namespace avfuse
