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
#include <fstream>

#include "spkadapt/checkpoint.hpp"
#include "spkadapt/grad_check.hpp"
#include "spkadapt/speaker_embedding.hpp"
#include "spkadapt/training.hpp"
#include "support/temp_dir.hpp"

namespace spkadapt {
namespace {

std::vector<Utterance> small_corpus(std::size_t speakers, std::size_t per_speaker, std::uint64_t seed) {
  CorpusSpec spec;
  const auto inv = make_inventory(spec, seed);
  SyntheticSpeakerEmbedder embedder(spec.n_mels, {.dim = spec.embedding_dim});
  Rng rng(seed);
  std::vector<Utterance> out;
  for (std::size_t s = 0; s < speakers; ++s) {
    const auto spk = make_speaker(spec, "s" + std::to_string(s), seed * 100 + s);
    for (std::size_t i = 0; i < per_speaker; ++i) {
      std::vector<std::int32_t> ph(6 + rng.below(4));
      for (auto& p : ph) p = static_cast<std::int32_t>(rng.below(spec.vocab_size));
      Utterance u = synthesize_features(spec, inv, spk, ph, rng);
      u.embedding = embedder.embed(u.mel);
      out.push_back(std::move(u));
    }
  }
  return out;
}

TrainConfig quick_train() {
  TrainConfig c = TrainConfig::desk();
  c.schedule.warmup_steps = 2;
  c.schedule.duration_start_step = 3;
  c.schedule.milestones = {50, 60, 70};
  c.schedule.total_steps = 80;
  c.batch_size = 2;
  c.prior_steps = 4;
  c.binarization_start = 4;
  c.binarization_ramp = 2;
  c.val_every = 0;
  c.checkpoint_every = 0;
  c.log_every = 1;
  return c;
}

bool same_params(const ParameterStore<float>& a, const ParameterStore<float>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, p] : a.entries()) {
    if (!b.contains(name)) return false;
    const auto& q = b.at(name).value;
    if (q.shape() != p->value.shape() || !std::equal(q.data().begin(), q.data().end(), p->value.data().begin())) {
      return false;
    }
  }
  return true;
}

TEST(ScheduleTest, LearningRateExamples) {
  ScheduleConfig s;
  EXPECT_EQ(lr_at(0, s), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(2000, s), 0.5e-3);
  EXPECT_DOUBLE_EQ(lr_at(4000, s), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(299999, s), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(300000, s), 1e-3 * 0.3);
  EXPECT_DOUBLE_EQ(lr_at(400001, s), 1e-3 * 0.3 * 0.3);
  EXPECT_DOUBLE_EQ(lr_at(600000, s), 1e-3 * 0.3 * 0.3 * 0.3);
  s.constant = true;
  EXPECT_EQ(lr_at(0, s), 1e-3);
  const ScheduleConfig desk = ScheduleConfig{}.scaled(100);
  EXPECT_EQ(desk.warmup_steps, 40u);
  EXPECT_EQ(desk.duration_start_step, 500u);
  EXPECT_EQ(desk.milestones, (std::vector<std::size_t>{3000, 4000, 5000}));
  EXPECT_EQ(desk.total_steps, 6000u);
}

TEST(ScheduleTest, LossContextGating) {
  const TrainConfig c = quick_train();
  EXPECT_FALSE(loss_context_at(c, 2).variance_losses);
  EXPECT_TRUE(loss_context_at(c, 3).variance_losses);
  EXPECT_EQ(loss_context_at(c, 0).prior_strength, 1.0);
  EXPECT_EQ(loss_context_at(c, 2).prior_strength, 0.5);
  EXPECT_EQ(loss_context_at(c, 4).prior_strength, 0.0);
  EXPECT_EQ(loss_context_at(c, 3).binarization_scale, 0.0);
  EXPECT_EQ(loss_context_at(c, 4).binarization_scale, 0.5);
  EXPECT_EQ(loss_context_at(c, 9).binarization_scale, 1.0);
}

TEST(ScheduleTest, BatchesDependOnlyOnSeedAndStep) {
  EXPECT_EQ(batch_indices(3, 17, 40, 8), batch_indices(3, 17, 40, 8));
  EXPECT_NE(batch_indices(3, 17, 40, 8), batch_indices(3, 18, 40, 8));
  for (auto i : batch_indices(5, 0, 7, 50)) EXPECT_LT(i, 7u);
  EXPECT_THROW(batch_indices(1, 0, 0, 2), InputError);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  ParameterStore<float> store;
  store.add("w", Tensor<float>({3}, std::vector<float>{1.0f, -2.0f, 0.5f}));
  ScheduleConfig s;
  Adam adam(s);
  std::map<std::string, Tensor<float>> grads;
  grads.emplace("w", Tensor<float>({3}, std::vector<float>{0.3f, -4.0f, 0.0f}));
  adam.update(store, grads, 0.01);
  // bias-corrected first step is lr * sign(g)
  EXPECT_NEAR(store.at("w").value[0], 0.99f, 1e-6);
  EXPECT_NEAR(store.at("w").value[1], -1.99f, 1e-6);
  EXPECT_EQ(store.at("w").value[2], 0.5f);
  EXPECT_EQ(adam.state().step, 1u);
  store.at("w").trainable = false;
  EXPECT_THROW(adam.update(store, grads, 0.01), InternalError);
}

TEST(AdamTest, ClipRescalesGlobalNorm) {
  std::map<std::string, Tensor<float>> g;
  g.emplace("a", Tensor<float>({2}, std::vector<float>{3.0f, 0.0f}));
  g.emplace("b", Tensor<float>({1}, std::vector<float>{4.0f}));
  EXPECT_NEAR(clip_gradients(g, 1.0), 5.0, 1e-9);
  EXPECT_NEAR(g.at("a")[0], 0.6f, 1e-7);
  EXPECT_NEAR(g.at("b")[0], 0.8f, 1e-7);
  EXPECT_NEAR(clip_gradients(g, 10.0), 1.0, 1e-6);
  EXPECT_NEAR(g.at("b")[0], 0.8f, 1e-7);
}

class TrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new std::vector<Utterance>(small_corpus(3, 4, 7));
    held_out_ = new std::vector<Utterance>(small_corpus(2, 2, 8));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete held_out_;
  }
  static std::span<const Utterance> train() { return *corpus_; }
  static std::span<const Utterance> val() { return std::span<const Utterance>(*corpus_).first(2); }
  static std::span<const Utterance> held_out() { return *held_out_; }

  static std::vector<Utterance>* corpus_;
  static std::vector<Utterance>* held_out_;
};
std::vector<Utterance>* TrainingTest::corpus_ = nullptr;
std::vector<Utterance>* TrainingTest::held_out_ = nullptr;

TEST_F(TrainingTest, TotalIsWeightedSumOfComponents) {
  TtsModel<float> model(ModelConfig::desk(), 3);
  model.stats = compute_variance_stats(train());
  LossContext ctx;
  ctx.weights.mel = 0.7;
  ctx.weights.pitch = 2.5;
  ctx.binarization_scale = 0.25;
  ctx.prior_strength = 0.5;
  for (const auto& u : train()) {
    Graph<float> g;
    const auto r = compute_losses(g, model, u, ctx);
    EXPECT_NEAR(r.losses.total, r.losses.weighted_sum(), 1e-6 * std::max(1.0, std::abs(r.losses.total)));
    EXPECT_EQ(r.losses.effective.binarization, 0.25);
    for (double v : r.losses.values()) EXPECT_TRUE(std::isfinite(v));
  }
  ctx.variance_losses = false;
  Graph<float> g;
  const auto r = compute_losses(g, model, train()[0], ctx);
  EXPECT_EQ(r.losses.effective.duration, 0.0);
  EXPECT_NEAR(r.losses.total, r.losses.weighted_sum(), 1e-6 * std::max(1.0, std::abs(r.losses.total)));
}

TEST_F(TrainingTest, TotalMatchesFiniteDifferences) {
  TtsModel<double> model(ModelConfig::desk(), 4);
  model.stats = compute_variance_stats(train());
  model.attach(Strategy::parse("hyper_e/v/d"), AdapterDims::desk(), 5);
  Rng rng(6);
  for (const auto& [name, p] : model.params.entries()) {
    if (!is_adaptation_parameter(name)) continue;
    for (auto& v : p->value.data()) v += 0.05 * rng.normal();
  }
  model.params.set_all_trainable(true);
  LossContext ctx;
  ctx.prior_strength = 0.3;
  ctx.binarization_scale = 0.5;
  for (int inst = 0; inst < 2; ++inst) {
    const Utterance& u = train()[static_cast<std::size_t>(inst) * 5];
    const auto report = grad_check_parameters(
        [&](Graph<double>& g) { return compute_losses(g, model, u, ctx).total; }, model.params,
        {.eps = 1e-4, .max_coords_per_tensor = 2, .seed = static_cast<std::uint64_t>(inst), .kink_retries = 3});
    EXPECT_TRUE(report.passed) << "instance " << inst << ": " << report.max_rel_error << " at "
                               << report.worst_location << " (" << report.worst_analytic << " vs "
                               << report.worst_numeric << ")";
  }
}

TEST_F(TrainingTest, SmallStepDoesNotIncreaseLoss) {
  TtsModel<double> model(ModelConfig::desk(), 8);
  model.stats = compute_variance_stats(train());
  const Utterance& u = train()[1];
  auto eval = [&] {
    Graph<double> g;
    const auto r = compute_losses(g, model, u, LossContext{});
    return std::make_pair(r.losses.total, r.durations);
  };
  Graph<double> g;
  const auto r = compute_losses(g, model, u, LossContext{});
  g.backward(r.total);
  const auto [before, path] = eval();
  for (auto& [p, grad] : g.parameter_grads()) {
    auto& value = model.params.at(p->name).value;
    for (std::size_t i = 0; i < grad.size(); ++i) value[i] -= 1e-6 * grad[i];
  }
  const auto [after, path_after] = eval();
  ASSERT_EQ(path, path_after);
  EXPECT_LE(after, before);
}

TEST_F(TrainingTest, PretrainIsDeterministicAndResumable) {
  const TrainConfig c = quick_train();
  const auto a = pretrain(ModelConfig::desk(), c, 11, train(), val(), nullptr, 8);
  const auto b = pretrain(ModelConfig::desk(), c, 11, train(), val(), nullptr, 8);
  ASSERT_EQ(a.log.size(), 8u);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(format_log_row(a.log[i]), format_log_row(b.log[i]));
  EXPECT_TRUE(same_params(a.checkpoint.model.params, b.checkpoint.model.params));
  EXPECT_EQ(a.checkpoint.step, 8u);

  testing::ScopedTempDir dir("resume");
  const auto half = pretrain(ModelConfig::desk(), c, 11, train(), val(), nullptr, 4);
  save_checkpoint(dir.path() / "half.ckpt", half.checkpoint);
  const Checkpoint loaded = load_checkpoint(dir.path() / "half.ckpt");
  const auto rest = pretrain(ModelConfig::desk(), c, 11, train(), val(), &loaded, 8);
  ASSERT_EQ(rest.log.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(format_log_row(rest.log[i]), format_log_row(a.log[4 + i]));
  EXPECT_TRUE(same_params(rest.checkpoint.model.params, a.checkpoint.model.params));
  EXPECT_EQ(rest.validation.back().loss, a.validation.back().loss);
}

TEST_F(TrainingTest, PretrainReducesValidationLoss) {
  TrainConfig c = quick_train();
  c.batch_size = 4;
  c.schedule.peak_lr = 3e-3;
  const auto r = pretrain(ModelConfig::desk(), c, 2, train(), val(), nullptr, 40);
  ASSERT_GE(r.validation.size(), 2u);
  EXPECT_EQ(r.validation.front().step, 0u);
  EXPECT_LT(r.validation.back().loss, r.validation.front().loss);
}

TEST_F(TrainingTest, CheckpointRoundTripIsByteStable) {
  testing::ScopedTempDir dir("ckpt");
  TrainConfig c = quick_train();
  const auto r = pretrain(ModelConfig::desk(), c, 5, train(), {}, nullptr, 3);
  const auto adapted =
      adapt(r.checkpoint, Strategy::parse("hyper_v/d"), AdapterDims::desk(), AdaptConfig{.steps = 2, .batch_size = 2},
            LossWeights{}, 5, held_out(), {});
  for (const Checkpoint* ck : {&r.checkpoint, &adapted.checkpoint}) {
    save_checkpoint(dir.path() / "a.ckpt", *ck);
    const Checkpoint loaded = load_checkpoint(dir.path() / "a.ckpt");
    save_checkpoint(dir.path() / "b.ckpt", loaded);
    EXPECT_EQ(testing::read_bytes(dir.path() / "a.ckpt"), testing::read_bytes(dir.path() / "b.ckpt"));
    EXPECT_TRUE(same_params(loaded.model.params, ck->model.params));
    EXPECT_EQ(loaded.model.strategy.name(), ck->model.strategy.name());
    EXPECT_EQ(loaded.model.params.count(true), ck->model.params.count(true));
    EXPECT_EQ(loaded.model.stats.energy_max, ck->model.stats.energy_max);
    EXPECT_EQ(loaded.step, ck->step);
  }
}

TEST_F(TrainingTest, DamagedCheckpointsAreRejected) {
  testing::ScopedTempDir dir("bad");
  TtsModel<float> model(ModelConfig::desk(), 1);
  model.stats = compute_variance_stats(train());
  save_checkpoint(dir.path() / "ok.ckpt", Checkpoint{model, 0, {}});
  auto bytes = testing::read_bytes(dir.path() / "ok.ckpt");
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir.path() / name, std::ios::binary) << data;
    return dir.path() / name;
  };
  EXPECT_THROW(load_checkpoint(write("trunc.ckpt", bytes.substr(0, bytes.size() / 2))), IoError);
  EXPECT_THROW(load_checkpoint(write("magic.ckpt", "XXXX" + bytes.substr(4))), IoError);
  EXPECT_THROW(load_checkpoint(write("tail.ckpt", bytes + "!")), IoError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), IoError);

  model.params.erase("decoder.mel.b");
  save_checkpoint(dir.path() / "short.ckpt", Checkpoint{model, 0, {}});
  EXPECT_THROW(load_checkpoint(dir.path() / "short.ckpt"), ConfigError);
}

TEST_F(TrainingTest, AdaptationTouchesOnlyStrategyParameters) {
  const auto base = pretrain(ModelConfig::desk(), quick_train(), 9, train(), {}, nullptr, 3);
  const AdaptConfig ac{.steps = 3, .batch_size = 2};

  const auto tts0 = adapt(base.checkpoint, Strategy::parse("tts0"), AdapterDims::desk(), ac, {}, 1, held_out(),
                          held_out());
  EXPECT_EQ(tts0.trainable, 0u);
  EXPECT_TRUE(tts0.log.empty());
  EXPECT_TRUE(same_params(tts0.checkpoint.model.params, base.checkpoint.model.params));
  EXPECT_EQ(tts0.validation, validation_loss(base.checkpoint.model, held_out()));

  for (const char* s : {"adapter_e/v/d", "hyper_e/v/d"}) {
    const auto r = adapt(base.checkpoint, Strategy::parse(s), AdapterDims::desk(), ac, {}, 1, held_out(), held_out());
    EXPECT_EQ(r.trainable, count_trainable_params(Strategy::parse(s), ModelConfig::desk(), AdapterDims::desk()));
    EXPECT_EQ(r.log.size(), 3u);
    for (const auto& [name, p] : r.checkpoint.model.params.entries()) {
      if (is_adaptation_parameter(name)) continue;
      const auto& before = base.checkpoint.model.params.at(name).value;
      EXPECT_TRUE(std::equal(before.data().begin(), before.data().end(), p->value.data().begin())) << name;
    }
    // detaching the adapters gives back the backbone exactly
    EXPECT_EQ(validation_loss(r.checkpoint.model, held_out(), false), tts0.validation) << s;
    EXPECT_THROW(adapt(r.checkpoint, Strategy::parse(s), AdapterDims::desk(), ac, {}, 1, held_out(), {}), ConfigError);
  }

  const auto ft = adapt(base.checkpoint, Strategy::parse("ft"), AdapterDims::desk(), ac, {}, 1, held_out(), {});
  EXPECT_EQ(ft.trainable, base.checkpoint.model.backbone_parameter_count());
  EXPECT_FALSE(same_params(ft.checkpoint.model.params, base.checkpoint.model.params));
}

TEST(LogFormatTest, HeaderMatchesRows) {
  LogRow row;
  row.step = 12;
  row.lr = 0.5;
  const std::string h = log_header(), r = format_log_row(row);
  EXPECT_EQ(std::count(h.begin(), h.end(), '\t'), std::count(r.begin(), r.end(), '\t'));
  EXPECT_EQ(r.substr(0, 7), "12\t0.5\t");
}

}  // namespace
}  // namespace spkadapt
