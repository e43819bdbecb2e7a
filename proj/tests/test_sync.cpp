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

#include <set>

#include "avfuse/errors.hpp"
#include "avfuse/sync.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace avfuse;
using namespace avfuse::testing;

TEST_SUITE("sync") {

TEST_CASE("dda index examples") {
  CHECK(dda_indices(2, {25, 100}, 8) == std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 1, 1});
  std::vector<std::size_t> id(9);
  std::iota(id.begin(), id.end(), 0);
  CHECK(dda_indices(9, {30, 30}, 9) == id);
  for (std::size_t n : {1u, 5u, 17u}) {
    for (std::size_t i : dda_indices(1, {25, 100}, n)) CHECK(i == 0);
  }
}

TEST_CASE("dda matches floor arithmetic and is monotone") {
  for (int trial = 0; trial < 300; ++trial) {
    const RatePair r{static_cast<std::uint32_t>(uniform_int(1, 120)),
                     static_cast<std::uint32_t>(uniform_int(1, 120))};
    const std::size_t src = uniform_int(1, 60), dst = uniform_int(0, 200);
    const auto idx = dda_indices(src, r, dst);
    REQUIRE(idx.size() == dst);
    const std::size_t max_step = (r.src_rate + r.dst_rate - 1) / r.dst_rate;
    for (std::size_t t = 0; t < dst; ++t) {
      CHECK(idx[t] == std::min<std::size_t>(t * r.src_rate / r.dst_rate, src - 1));
      if (t > 0) {
        CHECK(idx[t] >= idx[t - 1]);
        CHECK(idx[t] - idx[t - 1] <= max_step);
      }
    }
  }
}

TEST_CASE("resample features") {
  const auto m = random_matrix(6, 4);
  CHECK(resample_features(m, {50, 50}, 6) == m);
  const auto two = random_matrix(2, 3);
  const auto up = resample_features(two, {25, 100}, 8);
  CHECK(up.cols() == 3);
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(up(t, c) == two(t < 4 ? 0 : 1, c));
  }
}

TEST_CASE("upsample then decimate is the identity for integer ratios") {
  for (std::uint32_t ratio : {2u, 3u, 4u}) {
    const auto m = random_matrix(uniform_int(1, 20), 5);
    const auto up = resample_features(m, {25, 25 * ratio}, m.rows() * ratio);
    const auto down = resample_features(up, {25 * ratio, 25}, m.rows());
    CHECK(down == m);
    std::set<std::vector<double>> orig, seen;
    for (std::size_t t = 0; t < m.rows(); ++t) orig.insert({m.row(t).begin(), m.row(t).end()});
    for (std::size_t t = 0; t < up.rows(); ++t) seen.insert({up.row(t).begin(), up.row(t).end()});
    CHECK(seen == orig);
  }
}

TEST_CASE("early concat") {
  const auto audio = random_matrix(40, 13);
  const auto vs = random_matrix(10, 34);
  const auto va = random_matrix(10, 43);
  const auto cat = early_concat(audio, vs, va, {25, 100});
  CHECK(cat.cols() == 90);
  CHECK(cat.rows() == 40);
  for (std::size_t t = 0; t < 40; ++t) {
    CHECK(cat(t, 0) == audio(t, 0));
    CHECK(cat(t, 13) == vs(t / 4, 0));
    CHECK(cat(t, 13 + 34) == va(t / 4, 0));
  }
  const FeatureMatrix none(0, 1);
  CHECK(early_concat(audio, none, none, {25, 100}) == audio);
}

}  // TEST_SUITE
