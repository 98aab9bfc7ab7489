// Copyright 2026 The spkadapt Authors
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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spkadapt/alignment.hpp"
#include "spkadapt/backbone.hpp"
#include "spkadapt/grad_check.hpp"
#include "spkadapt/ops.hpp"
#include "support/test_util.hpp"

namespace spkadapt {
namespace {

using testing::random_extent;
using testing::random_tensor;
using testing::randomize;
using testing::tiny_config;
using testing::weighted_sum;

// Every monotonic complete path: starts on phoneme 0, ends on n-1, and each
// frame either stays or moves one phoneme forward.
void enumerate_paths(std::size_t n, std::size_t m, std::vector<std::int32_t>& cur,
                     std::vector<std::vector<std::int32_t>>& out) {
  if (cur.size() == m) {
    if (static_cast<std::size_t>(cur.back()) == n - 1) out.push_back(cur);
    return;
  }
  const auto last = cur.back();
  for (std::int32_t next : {last, last + 1}) {
    if (static_cast<std::size_t>(next) >= n) continue;
    // can the remaining frames still reach n-1?
    if (n - 1 - static_cast<std::size_t>(next) > m - cur.size() - 1) continue;
    cur.push_back(next);
    enumerate_paths(n, m, cur, out);
    cur.pop_back();
  }
}

std::vector<std::vector<std::int32_t>> all_paths(std::size_t n, std::size_t m) {
  std::vector<std::vector<std::int32_t>> out;
  std::vector<std::int32_t> cur{0};
  enumerate_paths(n, m, cur, out);
  return out;
}

double path_score(const Tensor<double>& lp, const std::vector<std::int32_t>& path) {
  double s = 0;
  for (std::size_t t = 0; t < path.size(); ++t) s += lp(static_cast<std::size_t>(path[t]), t);
  return s;
}

std::size_t binomial(std::size_t a, std::size_t b) {
  std::size_t r = 1;
  for (std::size_t i = 1; i <= b; ++i) r = r * (a - b + i) / i;
  return r;
}

// Random grid whose columns are log distributions over phonemes.
Tensor<double> random_log_grid(std::size_t n, std::size_t m, Rng& rng, double scale = 2.0) {
  Tensor<double> lp = random_tensor({n, m}, rng, scale);
  for (std::size_t t = 0; t < m; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, lp(i, t));
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(lp(i, t) - mx);
    for (std::size_t i = 0; i < n; ++i) lp(i, t) -= mx + std::log(z);
  }
  return lp;
}

double forward_sum_value(const Tensor<double>& lp) {
  Graph<double> g;
  const Tensor<double> v = forward_sum_loss(g.constant(lp)).value();
  return v[0];
}

TEST(AlignmentOracleTest, EnumerationCountsMatchBinomial) {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t m = n; m <= 10; ++m) EXPECT_EQ(all_paths(n, m).size(), binomial(m - 1, n - 1));
  }
}

TEST(AlignmentOracleTest, ForwardSumAndViterbiMatchExhaustiveSearch) {
  Rng rng(2024);
  int cases = 0;
  for (int rep = 0; rep < 240; ++rep) {
    const std::size_t n = random_extent(rng, 1, 6);
    const std::size_t m = random_extent(rng, n, 10);
    const Tensor<double> lp = random_log_grid(n, m, rng);
    const auto paths = all_paths(n, m);

    std::vector<double> scores;
    for (const auto& p : paths) scores.push_back(path_score(lp, p));
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0;
    for (double s : scores) z += std::exp(s - mx);
    const double brute = -(mx + std::log(z));
    EXPECT_NEAR(forward_sum_value(lp), brute, 1e-6) << "n=" << n << " m=" << m;

    std::vector<std::size_t> order(paths.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    // a unique best path makes exact comparison meaningful
    if (order.size() > 1) ASSERT_GT(scores[order[0]] - scores[order[1]], 1e-9);
    EXPECT_EQ(viterbi_path(lp), paths[order[0]]) << "n=" << n << " m=" << m;
    ++cases;
  }
  EXPECT_GE(cases, 200);
}

TEST(AlignmentOracleTest, FloatGridAgreesWithDoubleViterbi) {
  Rng rng(5);
  const Tensor<double> lp = random_log_grid(4, 9, rng);
  EXPECT_EQ(viterbi_path(lp.cast<float>()), viterbi_path(lp));
}

TEST(ForwardSumTest, SinglePhonemeAndSquareGrid) {
  Rng rng(1);
  // n = 1: a single path through row 0
  const Tensor<double> one = random_tensor({1, 6}, rng);
  double s = 0;
  for (double v : one.data()) s += v;
  EXPECT_NEAR(forward_sum_value(one), -s, 1e-12);
  // n = m: only the diagonal
  const Tensor<double> sq = random_tensor({4, 4}, rng);
  EXPECT_NEAR(forward_sum_value(sq), -(sq(0, 0) + sq(1, 1) + sq(2, 2) + sq(3, 3)), 1e-12);
}

TEST(ForwardSumTest, UniformGridCountsPaths) {
  // every column uniform over n: each path scores -m log n
  const std::size_t n = 3, m = 7;
  const Tensor<double> lp({n, m}, -std::log(3.0));
  const double expected = static_cast<double>(m) * std::log(3.0) - std::log(static_cast<double>(binomial(m - 1, n - 1)));
  EXPECT_NEAR(forward_sum_value(lp), expected, 1e-12);
}

TEST(ForwardSumTest, InfeasibleWhenFewerFramesThanPhonemes) {
  Graph<double> g;
  EXPECT_THROW(forward_sum_loss(g.constant(Tensor<double>({5, 4}))), InfeasibleAlignmentError);
  EXPECT_THROW(viterbi_path(Tensor<double>({5, 4})), InfeasibleAlignmentError);
}

TEST(ForwardSumTest, LongUtteranceStaysFinite) {
  Rng rng(9);
  const Tensor<double> lp = random_log_grid(60, 2000, rng, 4.0);
  const double v = forward_sum_value(lp);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 0.0);
  const auto d = viterbi_durations(lp);
  EXPECT_EQ(std::accumulate(d.begin(), d.end(), 0), 2000);
  for (auto x : d) EXPECT_GE(x, 1);

  Graph<float> g;
  const Var<float> lf = g.leaf(lp.cast<float>(), true);
  const Var<float> loss = forward_sum_loss(lf);
  g.backward(loss);
  EXPECT_TRUE(std::isfinite(loss.value()[0]));
  for (float x : g.grad(lf).data()) ASSERT_TRUE(std::isfinite(x));
}

TEST(ForwardSumTest, GradientIsNegativePosterior) {
  Rng rng(3);
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t n = random_extent(rng, 1, 5);
    const std::size_t m = random_extent(rng, n, 9);
    const Tensor<double> lp = random_log_grid(n, m, rng);
    const auto report = grad_check(
        [](Graph<double>&, std::span<const Var<double>> v) { return forward_sum_loss(v[0]); },
        std::span<const Tensor<double>>(&lp, 1));
    EXPECT_TRUE(report.passed) << report.max_rel_error << " at " << report.worst_location;

    // each frame's posterior over phonemes sums to one
    Graph<double> g;
    const Var<double> leaf = g.leaf(lp, true);
    g.backward(forward_sum_loss(leaf));
    const Tensor<double> grad = g.grad(leaf);
    for (std::size_t t = 0; t < m; ++t) {
      double col = 0;
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_LE(grad(i, t), 1e-12);
        col += grad(i, t);
      }
      EXPECT_NEAR(col, -1.0, 1e-9);
    }
  }
}

TEST(ViterbiTest, WorkedExamples) {
  EXPECT_EQ(viterbi_durations(Tensor<double>({1, 5})), (std::vector<std::int32_t>{5}));
  // diagonal preference over a 2 x 4 grid
  Tensor<double> lp({2, 4}, std::log(0.1));
  lp(0, 0) = lp(0, 1) = lp(1, 2) = lp(1, 3) = std::log(0.9);
  EXPECT_EQ(viterbi_durations(lp), (std::vector<std::int32_t>{2, 2}));
  // every path ties: each cell keeps its stay predecessor
  EXPECT_EQ(viterbi_path(Tensor<double>({2, 4})), (std::vector<std::int32_t>{0, 1, 1, 1}));
  EXPECT_EQ(viterbi_path(Tensor<double>({3, 3})), (std::vector<std::int32_t>{0, 1, 2}));
}

TEST(ViterbiTest, PathToDurationsRejectsBadIndex) {
  const std::vector<std::int32_t> path{0, 0, 2};
  EXPECT_EQ(path_to_durations(path, 3), (std::vector<std::int32_t>{2, 0, 1}));
  EXPECT_THROW(path_to_durations(path, 2), InputError);
}

TEST(BinarizationTest, WorkedExamples) {
  Graph<double> g;
  Tensor<double> hard({2, 3}, -50.0);
  hard(0, 0) = hard(1, 1) = hard(1, 2) = 0.0;
  const std::vector<std::int32_t> path{0, 1, 1};
  EXPECT_EQ(binarization_loss(g.constant(hard), path).value()[0], 0.0);
  const Tensor<double> uniform({2, 5}, std::log(0.5));
  const std::vector<std::int32_t> p5{0, 0, 1, 1, 1};
  EXPECT_NEAR(binarization_loss(g.constant(uniform), p5).value()[0], 5 * std::log(2.0), 1e-12);
  EXPECT_THROW(binarization_loss(g.constant(uniform), std::vector<std::int32_t>{}), StateError);
  EXPECT_THROW(binarization_loss(g.constant(uniform), path), DimensionError);
}

TEST(AlignFeaturesTest, ColumnsAreDistributions) {
  Rng rng(4);
  Graph<double> g;
  const auto text = g.constant(random_tensor({4, 3}, rng));
  const auto mel = g.constant(random_tensor({9, 3}, rng));
  const Tensor<double> lp = align_features(text, mel, 0.7).log_probs.value();
  ASSERT_EQ(lp.shape(), (Shape{4, 9}));
  for (std::size_t t = 0; t < 9; ++t) {
    double z = 0;
    for (std::size_t i = 0; i < 4; ++i) z += std::exp(lp(i, t));
    EXPECT_NEAR(z, 1.0, 1e-12);
  }
}

TEST(AlignFeaturesTest, DegenerateInputs) {
  Rng rng(6);
  Graph<double> g;
  const Tensor<double> one = align_features(g.constant(random_tensor({1, 3}, rng)),
                                            g.constant(random_tensor({5, 3}, rng)), 1.0).log_probs.value();
  for (double v : one.data()) EXPECT_NEAR(v, 0.0, 1e-12);

  Tensor<double> same({3, 2});
  for (std::size_t i = 0; i < 3; ++i) same(i, 0) = 0.3, same(i, 1) = -1.2;
  const Tensor<double> u =
      align_features(g.constant(same), g.constant(random_tensor({4, 2}, rng)), 1.0).log_probs.value();
  for (double v : u.data()) EXPECT_NEAR(v, -std::log(3.0), 1e-12);
}

TEST(AlignFeaturesTest, PriorPullsTowardDiagonal) {
  const Tensor<double> prior = diagonal_log_prior<double>(4, 12, 0.5, 1.0);
  ASSERT_EQ(prior.shape(), (Shape{12, 4}));
  for (std::size_t t = 0; t < 12; ++t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 4; ++i) {
      if (prior(t, i) > prior(t, best)) best = i;
    }
    EXPECT_EQ(best, t * 4 / 12) << "frame " << t;
  }
  const Tensor<double> off = diagonal_log_prior<double>(4, 12, 0.5, 0.0);
  for (double v : off.data()) EXPECT_EQ(v, 0.0);

  // identical features: the prior alone decides, so Viterbi follows the diagonal
  Graph<double> g;
  const Tensor<double> feat({4, 2}, 0.5);
  const Tensor<double> mel({12, 2}, 0.5);
  const auto a = align_features(g.constant(feat), g.constant(mel), 1.0, &prior, 1.0);
  EXPECT_EQ(viterbi_durations(a.log_probs.value()), (std::vector<std::int32_t>{3, 3, 3, 3}));
}

class SoftAlignTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(12);
    declare_backbone(store, cfg, rng);
    declare_alignment(store, cfg, rng);
  }
  ModelConfig cfg = tiny_config();
  ParameterStore<double> store;
};

TEST_F(SoftAlignTest, ShapesAndErrors) {
  Graph<double> g;
  Rng rng(2);
  const std::vector<std::int32_t> ph{1, 2, 3};
  const auto a = soft_align(g, store, cfg, ph, g.constant(random_tensor({8, cfg.n_mels}, rng)), 0.0);
  EXPECT_EQ(a.log_probs.shape(), (Shape{3, 8}));
  EXPECT_THROW(soft_align(g, store, cfg, ph, g.constant(random_tensor({8, cfg.n_mels + 1}, rng)), 0.0),
               DimensionError);
}

TEST_F(SoftAlignTest, ProjectionsMatchFiniteDifferences) {
  Rng rng(31);
  randomize(store, rng, 0.5, "align.");
  store.set_all_trainable(false);
  store.set_trainable_with_prefix("align.", true);
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t n = random_extent(rng, 2, 5);
    const std::size_t m = random_extent(rng, n, 10);
    std::vector<std::int32_t> ph(n);
    for (auto& p : ph) p = static_cast<std::int32_t>(rng.below(cfg.vocab_size));
    const Tensor<double> mel = random_tensor({m, cfg.n_mels}, rng);
    const auto report = grad_check_parameters(
        [&](Graph<double>& g) {
          const auto a = soft_align(g, store, cfg, ph, g.constant(mel), 1.0);
          return ops::add(forward_sum_loss(a.log_probs), weighted_sum(a.log_probs));
        },
        store, {.kink_retries = 2});
    EXPECT_TRUE(report.passed) << "instance " << inst << ": " << report.max_rel_error << " at "
                               << report.worst_location;
  }
}

}  // namespace
}  // namespace spkadapt
