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
#include "avfuse/fusion.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace avfuse;
using namespace avfuse::testing;

namespace {

PosteriorStream stream_of(const std::vector<std::vector<double>>& rows) {
  return validate_posteriors(FeatureMatrix::FromRows(rows));
}

std::array<std::span<const double>, kNumStreams> frame_rows(const StreamBundle& b, std::size_t t) {
  return {b[0].log_probs().row(t), b[1].log_probs().row(t), b[2].log_probs().row(t)};
}

double loss_at(const StreamBundle& b, const FeatureMatrix& w, const TargetAlignment& y, Loss loss,
               const FeatureMatrix* gamma) {
  return loss_value(fuse(b, StreamWeights(w)), y, loss, gamma);
}

// Central differences of the loss with respect to every weight entry.
FeatureMatrix fd_weights(const StreamBundle& b, const FeatureMatrix& w, const TargetAlignment& y,
                         Loss loss, const FeatureMatrix* gamma, double h) {
  FeatureMatrix g(w.rows(), w.cols());
  for (std::size_t t = 0; t < w.rows(); ++t) {
    for (std::size_t i = 0; i < w.cols(); ++i) {
      FeatureMatrix up = w, dn = w;
      up(t, i) += h;
      dn(t, i) -= h;
      g(t, i) = (loss_at(b, up, y, loss, gamma) - loss_at(b, dn, y, loss, gamma)) / (2.0 * h);
    }
  }
  return g;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("fuse examples") {
  const auto b = random_bundle(5, 4);
  const auto single = fuse(b, StreamWeights::Constant(5, {1, 0, 0}));
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(std::abs(single.probs().data()[i] - b[0].probs().data()[i]) < 1e-12);
  }

  const auto p = validate_posteriors(random_posteriors(5, 4));
  const StreamBundle same(p, p, p);
  const auto mixed = fuse(same, StreamWeights::Constant(5, {0.2, 0.5, 0.3}));
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(std::abs(mixed.probs().data()[i] - p.probs().data()[i]) < 1e-12);
  }

  const StreamBundle two(stream_of({{0.9, 0.1}}), stream_of({{0.5, 0.5}}), stream_of({{0.5, 0.5}}));
  const auto f = fuse(two, StreamWeights::Constant(1, {0.5, 0.5, 0.0}));
  CHECK(std::abs(f.probs()(0, 0) - 0.75) < 1e-12);
  CHECK(std::abs(f.probs()(0, 1) - 0.25) < 1e-12);
}

TEST_CASE("fused rows sum to one, zero weights give uniform") {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t t = uniform_int(1, 10), s = uniform_int(2, 12);
    const auto f = fuse(random_bundle(t, s, 3.0), random_weights(t));
    for (std::size_t r = 0; r < t; ++r) {
      double sum = 0.0;
      for (double v : f.probs().row(r)) sum += v;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
  const auto z = fuse(random_bundle(2, 5), StreamWeights::Constant(2, {0, 0, 0}));
  for (double v : z.probs().data()) CHECK(std::abs(v - 0.2) < 1e-15);
}

TEST_CASE("identical streams depend only on the weight total") {
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = validate_posteriors(random_posteriors(3, 6));
    const StreamBundle same(p, p, p);
    const double total = uniform(0.0, 1.0);
    const double a = uniform(0.0, total), b = uniform(0.0, total - a);
    const auto f1 = fuse(same, StreamWeights::Constant(3, {a, b, total - a - b}));
    const auto f2 = fuse(same, StreamWeights::Constant(3, {total, 0, 0}));
    for (std::size_t i = 0; i < 18; ++i) CHECK(std::abs(f1.probs().data()[i] - f2.probs().data()[i]) < 1e-12);
  }
}

TEST_CASE("frame objective ignores a constant shift of one stream's logs") {
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_bundle(1, 5);
    std::vector<double> shifted(b[1].log_probs().row(0).begin(), b[1].log_probs().row(0).end());
    const double c = uniform(-20, 20);
    for (auto& v : shifted) v += c;
    auto rows = frame_rows(b, 0);
    const std::array<double, 3> w = {uniform(0, 1), uniform(0, 1), uniform(0, 1)};
    const int y = static_cast<int>(uniform_int(0, 4));
    const double ce = frame_ce(rows, y, w);
    rows[1] = shifted;
    CHECK(std::abs(frame_ce(rows, y, w) - ce) < 1e-12);
  }
}

TEST_CASE("ce and mse examples") {
  const auto half = FusedPosteriors::FromProbs(FeatureMatrix::FromRows({{0.5, 0.5}}));
  const TargetAlignment y0({0}, 2);
  CHECK(std::abs(ce_loss(half, y0) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(mse_loss(half, y0) - 0.25) < 1e-12);

  const auto hot = validate_posteriors(FeatureMatrix::FromRows({{1, 0, 0}, {0, 0, 1}}));
  const auto fh = FusedPosteriors::FromProbs(hot.probs());
  const TargetAlignment yh({0, 2}, 3);
  CHECK(ce_loss(fh, yh) < 1e-9);
  CHECK(mse_loss(fh, yh) < 1e-18);

  const auto p = random_posteriors(2, 4);
  const auto f = FusedPosteriors::FromProbs(p);
  const TargetAlignment y({1, 3}, 4);
  const double per = (-std::log(p(0, 1)) - std::log(p(1, 3))) / 2.0;
  CHECK(std::abs(ce_loss(f, y) - per) < 1e-12);

  // Relabeling states together with the targets leaves MSE unchanged.
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  FeatureMatrix q(2, 4);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t s = 0; s < 4; ++s) q(t, perm[s]) = p(t, s);
  }
  const TargetAlignment yq({static_cast<int>(perm[1]), static_cast<int>(perm[3])}, 4);
  CHECK(std::abs(mse_loss(FusedPosteriors::FromProbs(q), yq) - mse_loss(f, y)) < 1e-15);
}

TEST_CASE("weight gradients match central differences") {
  for (Loss loss : {Loss::kCE, Loss::kMSE, Loss::kMMI}) {
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t t = uniform_int(1, 4), s = uniform_int(2, 6);
      const auto b = random_bundle(t, s);
      const auto y = random_targets(t, s);
      const FeatureMatrix w = random_weights(t, 0.05, 0.95).matrix();
      const FeatureMatrix gamma = random_posteriors(t, s);
      const FeatureMatrix* g = loss == Loss::kMMI ? &gamma : nullptr;
      const FeatureMatrix an = loss_grad_weights(b, StreamWeights(w), y, loss, g);
      const FeatureMatrix fd = fd_weights(b, w, y, loss, g, 1e-6);
      for (std::size_t i = 0; i < an.data().size(); ++i) {
        CHECK(rel_diff(an.data()[i], fd.data()[i]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("gradient special cases") {
  const auto hot = validate_posteriors(FeatureMatrix::FromRows({{1, 0, 0}}));
  const StreamBundle perfect(hot, hot, hot);
  const TargetAlignment y({0}, 3);
  // p~ equals p* up to the floor.
  for (Loss loss : {Loss::kCE, Loss::kMSE}) {
    const auto g = loss_grad_weights(perfect, StreamWeights::Constant(1, {1, 1, 1}), y, loss);
    for (double v : g.data()) CHECK(std::abs(v) < 1e-8);
  }
  const auto uni = validate_posteriors(FeatureMatrix(3, 4, 1.0));
  const auto a = validate_posteriors(random_posteriors(3, 4));
  const StreamBundle b(a, uni, a);
  const auto g = loss_grad_weights(b, random_weights(3), random_targets(3, 4), Loss::kCE);
  for (std::size_t t = 0; t < 3; ++t) CHECK(std::abs(g(t, 1)) < 1e-14);
}

TEST_CASE("oracle picks the box corner for a two-stream frame") {
  const StreamBundle b(stream_of({{0.9, 0.1}}), stream_of({{0.4, 0.6}}), stream_of({{0.4, 0.6}}));
  const TargetAlignment y({0}, 2);
  const auto res = oracle_weights(b, y);
  CHECK(std::abs(res.weights(0, 0) - 1.0) < 1e-9);
  CHECK(std::abs(res.weights(0, 1)) < 1e-9);
  CHECK(std::abs(res.weights(0, 2)) < 1e-9);

  double grid_best = 1e300;
  const auto rows = frame_rows(b, 0);
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      grid_best = std::min(grid_best, frame_ce(rows, 0, {i / 100.0, j / 100.0, 0.0}));
    }
  }
  CHECK(res.report.frames[0].final_ce <= grid_best + 1e-12);
}

TEST_CASE("oracle with identical correct streams reaches the common minimum") {
  const auto p = stream_of({{0.7, 0.2, 0.1}});
  const StreamBundle b(p, p, p);
  const auto rows = frame_rows(b, 0);
  double best = 1e300;
  for (int i = 0; i <= 30; ++i) {
    for (int j = 0; j <= 30; ++j) {
      for (int k = 0; k <= 30; ++k) best = std::min(best, frame_ce(rows, 0, {i / 30.0, j / 30.0, k / 30.0}));
    }
  }
  const auto r = solve_frame_oracle(rows, 0);
  CHECK(r.final_ce <= best + 1e-9);
}

TEST_CASE("oracle dominates random weights and decreases monotonically") {
  for (int trial = 0; trial < 30; ++trial) {
    const auto b = random_bundle(1, uniform_int(2, 8), 2.0);
    const int y = static_cast<int>(uniform_int(0, b.states() - 1));
    const auto rows = frame_rows(b, 0);
    std::vector<double> trace;
    const auto r = solve_frame_oracle(rows, y, OracleConfig{}, &trace);
    REQUIRE(!trace.empty());
    for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= trace[k - 1]);
    CHECK(r.final_ce <= r.initial_ce);
    CHECK(std::abs(r.initial_ce - frame_ce(rows, y, {1.0 / 3, 1.0 / 3, 1.0 / 3})) < 1e-15);
    for (int k = 0; k < 1000; ++k) {
      CHECK(r.final_ce <= frame_ce(rows, y, {uniform(0, 1), uniform(0, 1), uniform(0, 1)}) + 1e-12);
    }
  }
}

TEST_CASE("loss names") {
  CHECK(parse_loss("MM") == Loss::kMM);
  CHECK(parse_loss("ce") == Loss::kCE);
  CHECK(loss_name(Loss::kMSE) == "mse");
  CHECK_THROWS_AS(parse_loss("l2"), ConfigError);
}

}  // TEST_SUITE
