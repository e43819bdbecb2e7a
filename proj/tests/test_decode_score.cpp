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

#include <optional>

#include "avfuse/decode_score.hpp"
#include "avfuse/errors.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace avfuse;
using namespace avfuse::testing;

namespace {

// Random graph with some forbidden transitions; retries until valid.
StateGraph random_graph(std::size_t s) {
  for (;;) {
    std::vector<double> init(s);
    std::vector<std::vector<double>> tr(s, std::vector<double>(s));
    for (auto& v : init) v = uniform(0, 1) < 0.3 ? 0.0 : uniform(0.1, 1.0);
    for (auto& row : tr) {
      for (auto& v : row) v = uniform(0, 1) < 0.3 ? 0.0 : uniform(0.1, 1.0);
    }
    auto norm = [](std::vector<double>& v) {
      double z = 0.0;
      for (double x : v) z += x;
      if (z == 0.0) return false;
      for (double& x : v) x /= z;
      return true;
    };
    bool ok = norm(init);
    for (auto& row : tr) ok = norm(row) && ok;
    if (!ok) continue;
    std::vector<std::string> labels(s);
    std::vector<bool> bounds(s);
    for (std::size_t i = 0; i < s; ++i) {
      labels[i] = "w" + std::to_string(i % 2);
      bounds[i] = i % 2 == 0;
    }
    try {
      return StateGraph(init, tr, labels, bounds);
    } catch (const DataError&) {
    }
  }
}

struct Enumeration {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> argmax;
  double log_z = -std::numeric_limits<double>::infinity();
  FeatureMatrix gamma;
};

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

Enumeration enumerate(const FusedPosteriors& f, const StateGraph& g, double kappa) {
  const std::size_t t_count = f.frames(), s = g.num_states();
  Enumeration e;
  std::vector<std::pair<std::vector<int>, double>> all;
  std::vector<int> path(t_count, 0);
  for (;;) {
    const double v = path_score(f, g, path, kappa);
    // Explicit score, independent of path_score.
    double ref = std::log(g.initial()[path[0]]) + kappa * f.log_probs()(0, path[0]);
    for (std::size_t t = 1; t < t_count; ++t) {
      ref += std::log(g.transitions()[path[t - 1]][path[t]]) + kappa * f.log_probs()(t, path[t]);
    }
    CHECK((v == ref || std::abs(v - ref) < 1e-12));
    all.emplace_back(path, v);
    if (v > e.best) {
      e.best = v;
      e.argmax = path;
    }
    e.log_z = log_add(e.log_z, v);
    std::size_t k = 0;
    while (k < t_count && ++path[k] == static_cast<int>(s)) path[k++] = 0;
    if (k == t_count) break;
  }
  e.gamma = FeatureMatrix(t_count, s);
  for (const auto& [p, v] : all) {
    if (v == -std::numeric_limits<double>::infinity()) continue;
    for (std::size_t t = 0; t < t_count; ++t) e.gamma(t, p[t]) += std::exp(v - e.log_z);
  }
  return e;
}

FusedPosteriors random_fused(std::size_t t, std::size_t s) {
  return FusedPosteriors::FromProbs(validate_posteriors(random_posteriors(t, s, 2.0)).probs());
}

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

}  // namespace

TEST_SUITE("decode_score") {

TEST_CASE("viterbi toy cases") {
  const auto one = StateGraph::Uniform(1);
  const auto r = viterbi(random_fused(6, 1), one);
  CHECK(r.path == std::vector<int>(6, 0));

  const StateGraph lr({1.0, 0.0}, {{0.5, 0.5}, {0.0, 1.0}}, {"a", "b"}, {true, true});
  const auto f = FusedPosteriors::FromProbs(
      FeatureMatrix::FromRows({{0.99, 0.01}, {0.99, 0.01}, {0.99, 0.01}, {0.01, 0.99}, {0.01, 0.99}}));
  const auto d = viterbi(f, lr);
  CHECK(d.path == std::vector<int>{0, 0, 0, 1, 1});
  CHECK(d.words == std::vector<std::string>{"a", "b"});
}

TEST_CASE("viterbi and forward-backward match exhaustive enumeration") {
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t t = uniform_int(1, 5), s = uniform_int(1, 4);
    const auto g = random_graph(s);
    const auto f = random_fused(t, s);
    const double kappa = uniform(0.5, 2.0);
    const auto e = enumerate(f, g, kappa);
    const auto v = viterbi(f, g, kappa);
    CHECK(std::abs(v.score - e.best) <= 1e-10);
    CHECK(v.path == e.argmax);
    const auto fb = forward_backward(f, g, kappa);
    CHECK(std::abs(fb.log_partition - e.log_z) <= 1e-10);
    for (std::size_t i = 0; i < fb.gamma.data().size(); ++i) {
      CHECK(std::abs(fb.gamma.data()[i] - e.gamma.data()[i]) <= 1e-10);
    }
  }
}

TEST_CASE("forward-backward rows sum to one; symmetric cases") {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = uniform_int(1, 10);
    const auto fb = forward_backward(random_fused(uniform_int(1, 30), s), random_graph(s));
    for (std::size_t t = 0; t < fb.gamma.rows(); ++t) {
      double sum = 0.0;
      for (double v : fb.gamma.row(t)) sum += v;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
  const auto one = forward_backward(random_fused(5, 1), StateGraph::Uniform(1));
  for (double v : one.gamma.data()) CHECK(std::abs(v - 1.0) < 1e-12);
  const auto uni = forward_backward(FusedPosteriors::FromProbs(FeatureMatrix(4, 3, 1.0 / 3.0)),
                                    StateGraph::Uniform(3));
  for (double v : uni.gamma.data()) CHECK(std::abs(v - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("mmi gradient examples") {
  const auto f = FusedPosteriors::FromProbs(FeatureMatrix::FromRows({{0.5, 0.5}}));
  const TargetAlignment y({0}, 2);
  const auto g = mmi_gradient(f, y, FeatureMatrix::FromRows({{0.6, 0.4}}), 1.0);
  CHECK(std::abs(g(0, 0) - 0.4) < 1e-15);
  CHECK(std::abs(g(0, 1) + 0.4) < 1e-15);
  const auto g2 = mmi_gradient(f, y, FeatureMatrix::FromRows({{0.6, 0.4}}), 2.0);
  CHECK(std::abs(g2(0, 0) - 0.8) < 1e-15);
  const auto zero = mmi_gradient(f, y, FeatureMatrix::FromRows({{1.0, 0.0}}), 1.0);
  for (double v : zero.data()) CHECK(v == 0.0);

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = uniform_int(1, 6), s = uniform_int(2, 6);
    const auto gr = mmi_gradient(random_fused(t, s), random_targets(t, s), random_posteriors(t, s),
                                 uniform(0.1, 3));
    for (std::size_t r = 0; r < t; ++r) {
      double sum = 0.0;
      for (double v : gr.row(r)) sum += v;
      CHECK(std::abs(sum) < 1e-12);
    }
  }
}

TEST_CASE("mmi objective gradient matches finite differences in log p~") {
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = uniform_int(1, 5), s = uniform_int(2, 4);
    const auto g = StateGraph::Uniform(s);
    const auto f = random_fused(t, s);
    const auto y = random_targets(t, s);
    const double kappa = uniform(0.5, 2.0);
    const auto obj = mmi_objective(f, y, g, kappa);
    const auto an = mmi_gradient(f, y, obj.gamma, kappa);
    const double h = 1e-6;
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t c = 0; c < s; ++c) {
        FeatureMatrix up = f.log_probs(), dn = f.log_probs();
        up(r, c) += h;
        dn(r, c) -= h;
        const double fu = mmi_objective(FusedPosteriors(f.probs(), up), y, g, kappa).value;
        const double fd = mmi_objective(FusedPosteriors(f.probs(), dn), y, g, kappa).value;
        CHECK(std::abs(an(r, c) - (fu - fd) / (2 * h)) <= 1e-6 * std::max(1.0, std::abs(an(r, c))));
      }
    }
  }
}

TEST_CASE("word error rate") {
  const auto r = wer(words("a b c"), words("a x c"));
  CHECK(std::abs(r.wer - 100.0 / 3.0) < 1e-12);
  CHECK(r.substitutions == 1);
  CHECK(wer(words("a b c"), words("a b c")).wer == 0.0);
  const auto d = wer(words("a b"), {});
  CHECK(d.wer == 100.0);
  CHECK(d.deletions == 2);
  const auto i = wer(words("a"), words("a b"));
  CHECK(i.insertions == 1);
  CHECK_THROWS_AS(wer({}, words("a")), DataError);

  const std::vector<std::string> vocab = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ref, hyp;
    for (std::size_t k = uniform_int(1, 8); k-- > 0;) ref.push_back(vocab[uniform_int(0, 3)]);
    for (std::size_t k = uniform_int(0, 8); k-- > 0;) hyp.push_back(vocab[uniform_int(0, 3)]);
    const auto base = wer(ref, hyp);
    CHECK(wer(ref, ref).errors() == 0);
    auto r2 = ref, h2 = hyp;
    r2.push_back("z");
    h2.push_back("z");
    CHECK(wer(r2, h2).errors() <= base.errors());
    CHECK(base.errors() >= (ref.size() > hyp.size() ? ref.size() - hyp.size() : hyp.size() - ref.size()));
  }
}

TEST_CASE("frame error rate") {
  const TargetAlignment y({0, 1, 2, 3}, 4);
  CHECK(frame_error_rate({0, 1, 2, 3}, y) == 0.0);
  CHECK(frame_error_rate({1, 2, 3, 0}, y) == 100.0);
  CHECK(frame_error_rate({0, 1, 0, 0}, y) == 50.0);
}

TEST_CASE("graph json round trip and validation") {
  const auto g = random_graph(4);
  const auto back = parse_state_graph(state_graph_to_json(g));
  CHECK(back.initial() == g.initial());
  CHECK(back.transitions() == g.transitions());
  CHECK(back.labels() == g.labels());
  CHECK(back.boundaries() == g.boundaries());
  CHECK_THROWS_AS(StateGraph({1.0, 0.0}, {{1.0, 0.0}, {0.0, 1.0}}, {"a", "b"}, {true, true}), DataError);
  CHECK_THROWS_AS(StateGraph({0.5, 0.4}, {{0.5, 0.5}, {0.5, 0.5}}, {"a", "b"}, {true, true}), DataError);
  CHECK_THROWS_AS(parse_state_graph("{not json"), DataError);
}

TEST_CASE("words are emitted on entering a boundary state") {
  const StateGraph g({0.5, 0.0, 0.5, 0.0},
                     {{0.5, 0.5, 0, 0}, {0.25, 0.25, 0.25, 0.25}, {0, 0, 0.5, 0.5}, {0.25, 0.25, 0.25, 0.25}},
                     {"x", "x", "y", "y"}, {true, false, true, false});
  CHECK(g.words({0, 0, 1, 1, 2, 3, 0, 1}) == std::vector<std::string>{"x", "y", "x"});
  CHECK(g.words({1, 0}) == std::vector<std::string>{"x"});
}

}  // TEST_SUITE
