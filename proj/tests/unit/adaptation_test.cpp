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

#include "spkadapt/adaptation.hpp"
#include "spkadapt/backbone.hpp"
#include "spkadapt/grad_check.hpp"
#include "spkadapt/model.hpp"
#include "spkadapt/ops.hpp"
#include "support/test_util.hpp"

namespace spkadapt {
namespace {

using testing::random_extent;
using testing::random_tensor;
using testing::randomize;
using testing::tiny_config;
using testing::weighted_sum;

const char* const kAllStrategies[] = {"adapter_e", "adapter_v", "adapter_d", "adapter_e/v", "adapter_e/d",
                                      "adapter_v/d", "adapter_e/v/d", "hyper_e", "hyper_v", "hyper_d",
                                      "hyper_e/v", "hyper_e/d", "hyper_v/d", "hyper_e/v/d"};

AdapterDims tiny_dims() {
  AdapterDims d;
  d.d_r = 3;
  d.d_2 = 4;
  d.d_l = 3;
  d.d_s = 2;
  d.init_scale = 0.3;
  return d;
}

std::vector<double> flatten(const AdapterVars<double>& w) {
  std::vector<double> out;
  for (const auto* v : {&w.w_down, &w.b_down, &w.w_up, &w.b_up}) {
    const Tensor<double> t = v->value();
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return out;
}

std::vector<double> generated(const ParameterStore<double>& store, SiteId site, const ModelConfig& cfg,
                              const AdapterDims& dims, const Tensor<double>& speaker) {
  Graph<double> g;
  return flatten(generate_adapter_weights(g, store, site, cfg, dims, g.constant(speaker)));
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

TEST(StrategyTest, ParsesAndCanonicalizes) {
  EXPECT_EQ(Strategy::parse("tts0").kind, StrategyKind::kTts0);
  EXPECT_EQ(Strategy::parse("ft").kind, StrategyKind::kFineTune);
  EXPECT_EQ(Strategy::parse("hyper_evd").name(), "hyper_e/v/d");
  EXPECT_EQ(Strategy::parse("adapter_e/d").name(), "adapter_e/d");
  for (const char* s : kAllStrategies) EXPECT_EQ(Strategy::parse(s).name(), s);
  for (const char* bad : {"hyper_", "hyper_de", "adapter_x", "adapter_e//d", "adapter_e/", "lora_e", "hyper_ee"}) {
    EXPECT_THROW(Strategy::parse(bad), ConfigError) << bad;
  }
  EXPECT_TRUE(Strategy::parse("tts0").modules().empty());
}

TEST(AdapterForwardTest, MatchesHandAlgebra) {
  Rng rng(17);
  const std::size_t n = 3, dh = 4, dr = 2;
  const Tensor<double> h = random_tensor({n, dh}, rng), wd = random_tensor({dh, dr}, rng),
                       bd = random_tensor({dr}, rng), wu = random_tensor({dr, dh}, rng),
                       bu = random_tensor({dh}, rng);
  Graph<double> g;
  const Tensor<double> out =
      adapter_forward(g.constant(h), {g.constant(wd), g.constant(bd), g.constant(wu), g.constant(bu)}).value();
  for (std::size_t r = 0; r < n; ++r) {
    double hidden[dr];
    for (std::size_t j = 0; j < dr; ++j) {
      double a = bd[j];
      for (std::size_t k = 0; k < dh; ++k) a += h(r, k) * wd(k, j);
      hidden[j] = a > 0 ? a : 0;
    }
    for (std::size_t c = 0; c < dh; ++c) {
      double y = h(r, c) + bu[c];
      for (std::size_t j = 0; j < dr; ++j) y += hidden[j] * wu(j, c);
      EXPECT_NEAR(out(r, c), y, 1e-12);
    }
  }
}

TEST(AdapterForwardTest, IdentityAndZeroCases) {
  Rng rng(2);
  const Tensor<double> h = random_tensor({5, 4}, rng);
  Graph<double> g;
  const AdapterVars<double> idw{g.constant(random_tensor({4, 2}, rng)), g.constant(random_tensor({2}, rng)),
                                g.constant(Tensor<double>({2, 4})), g.constant(Tensor<double>({4}))};
  const Tensor<double> same = adapter_forward(g.constant(h), idw).value();
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(same[i], h[i]);

  const AdapterVars<double> zb{g.constant(random_tensor({4, 2}, rng)), g.constant(Tensor<double>({2})),
                               g.constant(random_tensor({2, 4}, rng)), g.constant(Tensor<double>({4}))};
  const Tensor<double> zero = adapter_forward(g.constant(Tensor<double>({5, 4})), zb).value();
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);

  const AdapterVars<double> bad{g.constant(random_tensor({3, 2}, rng)), g.constant(Tensor<double>({2})),
                                g.constant(random_tensor({2, 4}, rng)), g.constant(Tensor<double>({4}))};
  EXPECT_THROW(adapter_forward(g.constant(h), bad), DimensionError);
}

TEST(AdapterForwardTest, MatchesFiniteDifferences) {
  Rng rng(40);
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t n = random_extent(rng, 1, 5), dh = random_extent(rng, 2, 6), dr = random_extent(rng, 1, 3);
    const std::vector<Tensor<double>> pts{random_tensor({n, dh}, rng), random_tensor({dh, dr}, rng),
                                          random_tensor({dr}, rng), random_tensor({dr, dh}, rng),
                                          random_tensor({dh}, rng)};
    const auto report = grad_check(
        [](Graph<double>&, std::span<const Var<double>> v) {
          return weighted_sum(adapter_forward(v[0], {v[1], v[2], v[3], v[4]}));
        },
        pts, {.kink_retries = 2});
    EXPECT_TRUE(report.passed) << "instance " << inst << ": " << report.max_rel_error << " at "
                               << report.worst_location;
  }
}

TEST(ParameterCountTest, PaperTableValues) {
  const ModelConfig cfg;  // full-size dims
  const AdapterDims dims;
  auto count = [&](const char* s, std::size_t d_s = 8) {
    AdapterDims d = dims;
    d.d_s = d_s;
    return count_trainable_params(Strategy::parse(s), cfg, d);
  };
  EXPECT_EQ(count("adapter_e"), 66688u);
  EXPECT_EQ(count("adapter_v"), 33344u);
  EXPECT_EQ(count("adapter_d"), 100032u);
  EXPECT_EQ(count("hyper_e"), 151112u);
  EXPECT_EQ(count("hyper_v"), 150984u);
  EXPECT_EQ(count("hyper_d"), 151240u);
  EXPECT_EQ(count("hyper_e/v/d"), 453336u);
  // sampler width scaling: each unit of d_s adds one source projector column
  // (129) and one row of each sampler (8224 + 8448)
  EXPECT_EQ(count("hyper_d", 2), 50434u);
  EXPECT_EQ(count("hyper_d", 32), 554464u);
  EXPECT_EQ(count("hyper_d", 128), 2167360u);
  EXPECT_EQ(count("hyper_e/v/d", 2), 150918u);
  EXPECT_EQ(count("hyper_e/v/d", 32), 1663008u);
  EXPECT_EQ(count("hyper_e/v/d", 128), 6501696u);
  EXPECT_EQ(count("hyper_d", 32) - count("hyper_d", 8), 24u * 16801u);
  EXPECT_EQ(count("tts0"), 0u);
  EXPECT_EQ(count_trainable_params(Strategy::parse("ft"), cfg, dims, 1234), 1234u);
}

// Independent oracle: the closed form against tensors actually declared.
TEST(ParameterCountTest, ClosedFormEqualsEnumeration) {
  for (const ModelConfig& cfg : {ModelConfig{}, ModelConfig::desk(), tiny_config()}) {
    for (std::size_t d_s : {2u, 8u, 32u}) {
      AdapterDims dims = cfg.d_h == 256 ? AdapterDims{} : AdapterDims::desk();
      dims.d_s = d_s;
      for (const char* s : kAllStrategies) {
        const Strategy strategy = Strategy::parse(s);
        ParameterStore<float> store;
        store.add("backbone.dummy", Tensor<float>({7}));
        Rng rng(1);
        declare_strategy(store, strategy, cfg, dims, rng);
        apply_trainability(store, strategy);
        EXPECT_EQ(store.count(true), count_trainable_params(strategy, cfg, dims)) << s << " d_s=" << d_s;
      }
    }
  }
}

TEST(ParameterCountTest, HypernetworksAreNotShared) {
  const ModelConfig cfg;
  const AdapterDims dims;
  const auto e = count_trainable_params(Strategy::parse("hyper_e"), cfg, dims);
  const auto d = count_trainable_params(Strategy::parse("hyper_d"), cfg, dims);
  EXPECT_EQ(count_trainable_params(Strategy::parse("hyper_e/d"), cfg, dims), e + d);
}

class HyperTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(3);
    declare_strategy(store, Strategy::parse("hyper_e/v/d"), cfg, dims, rng);
  }
  ModelConfig cfg = tiny_config();
  AdapterDims dims = tiny_dims();
  ParameterStore<double> store;
};

TEST_F(HyperTest, FreshSamplersGiveIdentityAdapters) {
  Rng rng(8);
  const Tensor<double> spk = random_tensor({cfg.speaker_dim}, rng);
  Graph<double> g;
  const auto w = generate_adapter_weights(g, store, SiteId{SiteModule::kDecoder, 1}, cfg, dims, g.constant(spk));
  const Tensor<double> up = w.w_up.value(), bu = w.b_up.value();
  for (double v : up.data()) EXPECT_EQ(v, 0.0);
  for (double v : bu.data()) EXPECT_EQ(v, 0.0);
  const Tensor<double> h = random_tensor({4, cfg.d_h}, rng);
  const Tensor<double> out = adapter_forward(g.constant(h), w).value();
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(out[i], h[i]);
}

TEST_F(HyperTest, DeterministicAndSiteDependent) {
  Rng rng(9);
  randomize(store, rng, 0.5, "hyper.");
  const Tensor<double> spk = random_tensor({cfg.speaker_dim}, rng);
  const SiteId e0{SiteModule::kEncoder, 0}, e1{SiteModule::kEncoder, 1};
  EXPECT_EQ(generated(store, e0, cfg, dims, spk), generated(store, e0, cfg, dims, spk));
  EXPECT_GT(distance(generated(store, e0, cfg, dims, spk), generated(store, e1, cfg, dims, spk)), 1e-6);
  EXPECT_GT(distance(generated(store, e0, cfg, dims, spk),
                     generated(store, e0, cfg, dims, random_tensor({cfg.speaker_dim}, rng))),
            1e-6);
}

TEST_F(HyperTest, UnknownSiteIsLookupError) {
  Graph<double> g;
  const auto spk = g.constant(Tensor<double>({cfg.speaker_dim}, 0.1));
  EXPECT_THROW(generate_adapter_weights(g, store, SiteId{SiteModule::kEncoder, cfg.encoder_layers}, cfg, dims, spk),
               LookupError);
  EXPECT_THROW(generate_adapter_weights(g, store, SiteId{SiteModule::kVariance, 2}, cfg, dims, spk), LookupError);
  ParameterStore<double> only_e;
  Rng rng(1);
  declare_strategy(only_e, Strategy::parse("hyper_e"), cfg, dims, rng);
  EXPECT_THROW(generate_adapter_weights(g, only_e, SiteId{SiteModule::kDecoder, 0}, cfg, dims, spk), LookupError);
  EXPECT_THROW(generate_adapter_weights(g, store, SiteId{SiteModule::kEncoder, 0}, cfg, dims,
                                        g.constant(Tensor<double>({cfg.speaker_dim + 1}))),
               DimensionError);
}

TEST_F(HyperTest, GeneratedWeightsAreLipschitzInSpeaker) {
  Rng rng(11);
  randomize(store, rng, 0.5, "hyper.");
  for (int inst = 0; inst < 5; ++inst) {
    const Tensor<double> spk = random_tensor({cfg.speaker_dim}, rng);
    const Tensor<double> dir = random_tensor({cfg.speaker_dim}, rng);
    const SiteId site{SiteModule::kDecoder, static_cast<std::size_t>(inst) % cfg.decoder_layers};
    const auto base = generated(store, site, cfg, dims, spk);
    std::vector<double> ratio;
    for (double eps : {1e-3, 1e-4, 1e-5}) {
      Tensor<double> moved = spk;
      for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += eps * dir[i];
      ratio.push_back(distance(generated(store, site, cfg, dims, moved), base) / eps);
    }
    // O(eps) change: the difference quotient stays bounded as eps shrinks
    for (double r : ratio) {
      EXPECT_TRUE(std::isfinite(r));
      EXPECT_LT(r, 1e3);
    }
    EXPECT_LT(ratio[2], 2.0 * ratio[0] + 1e-9);
  }
}

TEST_F(HyperTest, MatchesFiniteDifferences) {
  Rng rng(21);
  randomize(store, rng, 0.5, "hyper.");
  store.set_all_trainable(true);
  for (int inst = 0; inst < 5; ++inst) {
    const Tensor<double> spk = random_tensor({cfg.speaker_dim}, rng);
    const Tensor<double> h = random_tensor({random_extent(rng, 1, 4), cfg.d_h}, rng);
    const SiteId site{static_cast<SiteModule>(inst % 3), 1};
    const auto report = grad_check_parameters(
        [&](Graph<double>& g) {
          const auto w = generate_adapter_weights(g, store, site, cfg, dims, g.constant(spk));
          return weighted_sum(adapter_forward(g.constant(h), w));
        },
        store, {.kink_retries = 2});
    EXPECT_TRUE(report.passed) << "instance " << inst << ": " << report.max_rel_error << " at "
                               << report.worst_location;
  }
}

TEST(TrainabilityTest, StrategyFlags) {
  const ModelConfig cfg = tiny_config();
  ParameterStore<double> store;
  Rng rng(5);
  declare_backbone(store, cfg, rng);
  const std::size_t backbone = store.count();
  declare_strategy(store, Strategy::parse("hyper_e/d"), cfg, tiny_dims(), rng);

  apply_trainability(store, Strategy::parse("tts0"));
  EXPECT_EQ(store.count(true), 0u);
  apply_trainability(store, Strategy::parse("ft"));
  EXPECT_EQ(store.count(true), backbone);
  apply_trainability(store, Strategy::parse("hyper_e/d"));
  EXPECT_EQ(store.count(true), count_trainable_params(Strategy::parse("hyper_e/d"), cfg, tiny_dims()));
  for (auto* p : store.trainable()) EXPECT_TRUE(is_adaptation_parameter(p->name)) << p->name;
}

class ModelAdaptationTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto inv = make_inventory(spec, 1);
    const auto spk = make_speaker(spec, "s", 2);
    Rng r(3);
    utt = synthesize_features(spec, inv, spk, {1, 4, 9, 2, 7, 7, 3}, r);
    Rng er(4);
    utt.embedding.resize(spec.embedding_dim);
    for (auto& v : utt.embedding) v = static_cast<float>(er.normal());
  }

  TtsModel<double> model_with(const char* strategy) {
    TtsModel<double> m(ModelConfig::desk(), 5);
    m.stats = compute_variance_stats(std::span<const Utterance>(&utt, 1));
    m.attach(Strategy::parse(strategy), AdapterDims::desk(), 6);
    return m;
  }

  static double total(const TtsModel<double>& m, const Utterance& u, bool adapters) {
    Graph<double> g;
    LossContext ctx;
    ctx.use_adapters = adapters;
    return compute_losses(g, m, u, ctx).losses.total;
  }

  CorpusSpec spec;
  Utterance utt;
};

TEST_F(ModelAdaptationTest, FreshStrategiesAreIdentity) {
  for (const char* s : {"adapter_e/v/d", "hyper_e/v/d"}) {
    const auto m = model_with(s);
    EXPECT_EQ(total(m, utt, true), total(m, utt, false)) << s;
    const auto a = synthesize(m, utt.phonemes, utt.embedding, true);
    const auto b = synthesize(m, utt.phonemes, utt.embedding, false);
    EXPECT_EQ(a.durations, b.durations) << s;
    ASSERT_EQ(a.mel.shape(), b.mel.shape());
    for (std::size_t i = 0; i < a.mel.size(); ++i) ASSERT_EQ(a.mel[i], b.mel[i]) << s;
  }
}

TEST_F(ModelAdaptationTest, DetachedAdaptersRecoverBackbone) {
  for (const char* s : {"adapter_e/v/d", "hyper_e/v/d"}) {
    auto m = model_with(s);
    const double before = total(m, utt, false);
    Rng rng(7);
    for (const auto& [name, p] : m.params.entries()) {
      if (!is_adaptation_parameter(name)) continue;
      for (auto& v : p->value.data()) v += 0.1 * rng.normal();
    }
    EXPECT_NE(total(m, utt, true), before) << s;
    EXPECT_EQ(total(m, utt, false), before) << s;
  }
}

TEST_F(ModelAdaptationTest, AttachSetsTrainability) {
  auto m = model_with("adapter_e");
  EXPECT_EQ(m.params.count(true),
            count_trainable_params(Strategy::parse("adapter_e"), m.config, AdapterDims::desk()));
  EXPECT_THROW(m.attach(Strategy::parse("hyper_d"), AdapterDims::desk(), 1), StateError);
  TtsModel<double> ft(ModelConfig::desk(), 5);
  ft.attach(Strategy::parse("ft"), AdapterDims::desk(), 1);
  EXPECT_EQ(ft.params.count(true), ft.backbone_parameter_count());
}

}  // namespace
}  // namespace spkadapt
