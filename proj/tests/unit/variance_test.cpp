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

#include <cmath>
#include <numbers>

#include "spkadapt/audio.hpp"
#include "spkadapt/backbone.hpp"
#include "spkadapt/grad_check.hpp"
#include "spkadapt/model.hpp"
#include "spkadapt/variance.hpp"
#include "support/test_util.hpp"

namespace spkadapt {
namespace {

using testing::random_extent;
using testing::random_tensor;
using testing::randomize;
using testing::tiny_config;
using testing::weighted_sum;

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Sum of a few slow sinusoids around a speaker base pitch, in Hz.
std::vector<float> band_limited_contour(Rng& rng, std::size_t length) {
  const double base = rng.uniform(90, 250);
  const int parts = 1 + static_cast<int>(rng.below(4));
  std::vector<double> log_f0(length, std::log(base));
  for (int k = 0; k < parts; ++k) {
    const double period = rng.uniform(12, 120), phase = rng.uniform(0, 2 * std::numbers::pi);
    const double amp = rng.uniform(0.03, 0.15);
    for (std::size_t t = 0; t < length; ++t) {
      log_f0[t] += amp * std::sin(2 * std::numbers::pi * static_cast<double>(t) / period + phase);
    }
  }
  std::vector<float> hz(length);
  for (std::size_t t = 0; t < length; ++t) hz[t] = static_cast<float>(std::exp(log_f0[t]));
  return hz;
}

TEST(LengthRegulateTest, Examples) {
  Graph<double> g;
  const auto h = g.constant(Tensor<double>::matrix(2, 2, {1, 2, 3, 4}));
  const std::vector<std::int32_t> d{2, 3};
  const auto out = length_regulate(h, d).value();
  EXPECT_EQ(out, Tensor<double>::matrix(5, 2, {1, 2, 1, 2, 3, 4, 3, 4, 3, 4}));
  const std::vector<std::int32_t> ones{1, 1};
  const Tensor<double> copied = length_regulate(h, ones).value();
  EXPECT_EQ(copied, h.value());
  const std::vector<std::int32_t> zeros{0, 0};
  EXPECT_THROW(length_regulate(h, zeros), InputError);
  const std::vector<std::int32_t> negative{2, -1};
  EXPECT_THROW(length_regulate(h, negative), InputError);
}

TEST(LengthRegulateTest, OutputLengthIsDurationSum) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = random_extent(rng, 1, 9);
    std::vector<std::int32_t> d(n);
    std::int32_t total = 0;
    for (auto& x : d) total += (x = static_cast<std::int32_t>(rng.below(6)));
    if (total == 0) d[0] = total = 1;
    Graph<double> g;
    EXPECT_EQ(length_regulate(g.constant(random_tensor({n, 3}, rng)), d).rows(), static_cast<std::size_t>(total));
  }
  // The contract example: 37 frames.
  Graph<double> g;
  const std::vector<std::int32_t> d{5, 9, 1, 12, 10};
  EXPECT_EQ(length_regulate(g.constant(random_tensor({5, 2}, rng)), d).rows(), 37u);
}

TEST(DurationRoundingTest, Examples) {
  EXPECT_EQ(duration_frames(0.0), 1);
  EXPECT_EQ(duration_frames(std::log(4.4)), 4);
  EXPECT_EQ(duration_frames(-5.0), 1);
  EXPECT_EQ(duration_frames(std::log(2.6)), 3);
}

TEST(NormalizeF0Test, Examples) {
  const std::vector<float> flat(10, 200.0f);
  for (double v : normalize_f0(flat).values) EXPECT_EQ(v, 0.0);
  const std::vector<float> gap{200.0f, 0.0f, 400.0f};
  const auto lf = interpolate_log_f0(gap);
  EXPECT_NEAR(lf[1], std::log(300.0), 1e-12);
  const std::vector<float> edges{0.0f, 0.0f, 120.0f, 0.0f};
  const auto le = interpolate_log_f0(edges);
  EXPECT_NEAR(le[0], std::log(120.0), 1e-6);
  EXPECT_NEAR(le[3], std::log(120.0), 1e-6);
  const std::vector<float> silent(5, 0.0f);
  EXPECT_THROW(normalize_f0(silent), NumericalError);
}

TEST(NormalizeF0Test, OutputIsStandardized) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> f0(random_extent(rng, 5, 80));
    for (auto& f : f0) f = rng.uniform() < 0.3 ? 0.0f : static_cast<float>(rng.uniform(80, 400));
    f0[0] = 150.0f;
    f0[1] = 170.0f;
    const auto n = normalize_f0(f0);
    double mean = 0, var = 0;
    for (double v : n.values) mean += v;
    mean /= static_cast<double>(n.values.size());
    for (double v : n.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n.values.size());
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(PitchCwtTest, ZeroLinearityAndScaling) {
  const PitchCwt cwt(10);
  const std::vector<double> zero(50, 0.0);
  const auto w0 = cwt.decompose(zero);
  for (double v : w0.data()) EXPECT_EQ(v, 0.0);
  Rng rng(4);
  std::vector<double> x(64), y(64), z(64), x2(64);
  const double a = 1.7, b = -0.4;
  for (std::size_t i = 0; i < 64; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
    z[i] = a * x[i] + b * y[i];
    x2[i] = 2 * x[i];
  }
  const auto wx = cwt.decompose(x), wy = cwt.decompose(y), wz = cwt.decompose(z), w2 = cwt.decompose(x2);
  ASSERT_EQ(wx.shape(), (Shape{64, 10}));
  for (std::size_t i = 0; i < wx.size(); ++i) {
    EXPECT_NEAR(wz[i], a * wx[i] + b * wy[i], 1e-6);
    EXPECT_NEAR(w2[i], 2 * wx[i], 1e-12);
  }
}

TEST(PitchCwtTest, ZeroSpectrogramReconstructsConstantMean) {
  const PitchCwt cwt(10);
  const auto f0 = icwt_reconstruct(cwt, Tensor<double>({30, 10}), std::log(200.0), 0.0);
  ASSERT_EQ(f0.size(), 30u);
  for (double v : f0) EXPECT_NEAR(v, 200.0, 1e-9);
  EXPECT_THROW(icwt_reconstruct(cwt, Tensor<double>({30, 10}), 5.0, -0.1), InputError);
}

TEST(PitchCwtTest, RoundTripCorrelationOnBandLimitedContours) {
  const PitchCwt cwt(10);
  Rng rng(5);
  double worst = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto f0 = band_limited_contour(rng, random_extent(rng, 100, 400));
    const auto norm = normalize_f0(f0);
    const auto back = icwt_reconstruct(cwt, cwt.decompose(norm.values), norm.mean, norm.stddev);
    ASSERT_EQ(back.size(), f0.size());
    const std::vector<double> ref(f0.begin(), f0.end());
    worst = std::min(worst, pearson(ref, back));
  }
  EXPECT_GT(worst, 0.95);
}

class VarianceHeadTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(6);
    declare_variance(store, cfg, rng);
    randomize(store, rng, 0.5);
  }
  ModelConfig cfg = tiny_config();
  ParameterStore<double> store;
};

TEST_F(VarianceHeadTest, PitchShapesAndSelfLoss) {
  cfg.variance_dropout = 0;
  Rng rng(7);
  Graph<double> g;
  const auto x = g.constant(random_tensor({13, cfg.d_h}, rng));
  const auto p = predict_pitch(g, store, cfg, x);
  EXPECT_EQ(p.spectrogram.shape(), (Shape{13, cfg.cwt_scales}));
  EXPECT_EQ(p.mean.shape(), (Shape{1}));
  EXPECT_EQ(p.stddev.shape(), (Shape{1}));
  EXPECT_EQ(ops::mse_loss(p.spectrogram, g.constant(p.spectrogram.value())).value()[0], 0.0);
  EXPECT_EQ(predict_duration(g, store, cfg, x).shape(), (Shape{13}));
  EXPECT_EQ(predict_energy(g, store, cfg, x).shape(), (Shape{13}));
}

TEST_F(VarianceHeadTest, EmbeddingTablesHave256Rows) {
  EXPECT_EQ(store.at("variance.energy_embedding").value.rows(), 256u);
  EXPECT_EQ(store.at("variance.pitch_embedding").value.rows(), 256u);
  VarianceStats stats;
  EXPECT_THROW(stats.energy_bin(1.0), StateError);
  stats.valid = true;
  stats.energy_min = 0.5;
  stats.energy_max = 7.25;
  EXPECT_EQ(stats.energy_bin(7.25), 255);
  EXPECT_EQ(stats.energy_bin(0.5), 0);
}

TEST_F(VarianceHeadTest, HeadsMatchFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_tensor({random_extent(rng, 3, 7), cfg.d_h}, rng);
    for (const char* head : {"duration", "pitch", "energy"}) {
      store.set_all_trainable(false);
      store.set_trainable_with_prefix(std::string("variance.") + head, true);
      const std::string h = head;
      const auto report = grad_check_parameters(
          [&](Graph<double>& g) {
            const auto in = g.constant(x);
            if (h == "duration") return weighted_sum(predict_duration(g, store, cfg, in));
            if (h == "energy") return weighted_sum(predict_energy(g, store, cfg, in));
            const auto p = predict_pitch(g, store, cfg, in);
            return ops::add(weighted_sum(p.spectrogram), ops::add(weighted_sum(p.mean), weighted_sum(p.stddev)));
          },
          store, {.kink_retries = 2});
      EXPECT_TRUE(report.passed) << head << " instance " << trial << ": " << report.max_rel_error << " at "
                                 << report.worst_location << " (analytic " << report.worst_analytic << ", numeric "
                                 << report.worst_numeric << ")";
    }
  }
}

TEST(TeacherForcingTest, ReproducesTargetLength) {
  CorpusSpec spec;
  const auto inv = make_inventory(spec, 1);
  const auto spk = make_speaker(spec, "s", 2);
  Rng r(3);
  auto u = synthesize_features(spec, inv, spk, {1, 4, 9, 2, 7, 7, 3}, r);
  u.embedding.assign(spec.embedding_dim, 0.2f);
  TtsModel<float> model(ModelConfig::desk(), 5);
  model.stats = compute_variance_stats(std::span<const Utterance>(&u, 1));
  Graph<float> g;
  const auto res = compute_losses(g, model, u, LossContext{});
  std::int32_t total = 0;
  for (auto d : res.durations) total += d;
  EXPECT_EQ(static_cast<std::size_t>(total), u.frames());
  EXPECT_EQ(res.durations.size(), u.phonemes.size());
  for (auto d : res.durations) EXPECT_GE(d, 1);
}

}  // namespace
}  // namespace spkadapt
