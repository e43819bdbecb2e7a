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

// Frame-rate synchronization between feature streams.

#ifndef AVFUSE_SYNC_HPP_
#define AVFUSE_SYNC_HPP_

#include <cstdint>
#include <vector>

#include "avfuse/core.hpp"

namespace avfuse {

/// Frame rates in Hz. Integer rates keep the index stepping exact.
struct RatePair {
  std::uint32_t src_rate = 25;
  std::uint32_t dst_rate = 100;
};

/// Source frame index for every destination frame: floor(t * src / dst),
/// clamped to src_len - 1. Computed with an integer error accumulator in
/// the manner of a Bresenham line walk.
std::vector<std::size_t> dda_indices(std::size_t src_len, const RatePair& rates,
                                     std::size_t dst_len);

/// Sample-and-hold resampling: output row t is input row dda_indices[t].
FeatureMatrix resample_features(const FeatureMatrix& m, const RatePair& rates,
                                std::size_t dst_len);

/// Early-integration stacking [audio | VS | VA]. Both video matrices are at
/// `video_rate` and get resampled to the audio frame count. Note the column
/// order differs from the (A, VA, VS) stream bundle order.
///
/// Passing two empty video matrices returns the audio features unchanged.
FeatureMatrix early_concat(const FeatureMatrix& audio, const FeatureMatrix& vs,
                           const FeatureMatrix& va, const RatePair& rates);

}  // namespace avfuse

#endif  // AVFUSE_SYNC_HPP_
