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

#include "spkadapt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace spkadapt {
namespace {

struct Trainer {
  TtsModel<float>& model;
  Adam& adam;
  std::uint64_t seed;
  std::span<const Utterance> train;
  std::size_t batch_size;
  double grad_clip;

  LogRow step(std::size_t step, const LossContext& ctx, double lr) {
    std::vector<const Utterance*> batch;
    for (std::size_t i : batch_indices(seed, step, train.size(), batch_size)) batch.push_back(&train[i]);
    BatchGradient bg = batch_gradient(model, batch, ctx, Rng::derive(Rng::derive(seed, "dropout"), step));
    LogRow row;
    row.step = step;
    row.lr = lr;
    row.losses = bg.losses;
    row.grad_norm = clip_gradients(bg.grads, grad_clip);
    adam.update(model.params, bg.grads, lr);
    return row;
  }
};

void require_nonempty(std::span<const Utterance> train, const char* what) {
  if (train.empty()) throw InputError(std::string(what) + ": no training utterances");
}

}  // namespace

double lr_at(std::size_t step, const ScheduleConfig& s) {
  if (s.constant) return s.peak_lr;
  if (step < s.warmup_steps) return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  double lr = s.peak_lr;
  for (std::size_t m : s.milestones) {
    if (step >= m) lr *= s.anneal_factor;
  }
  return lr;
}

void Adam::update(ParameterStore<float>& store, const std::map<std::string, Tensor<float>>& grads, double lr) {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(beta1_, t), c2 = 1.0 - std::pow(beta2_, t);
  for (const auto& [name, g] : grads) {
    Parameter<float>& p = store.at(name);
    if (!p.trainable) throw InternalError("Adam: update for frozen tensor " + name);
    auto [mi, fresh] = state_.m.try_emplace(name, g.shape());
    auto& m = mi->second;
    auto& v = state_.v.try_emplace(name, g.shape()).first->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      const double mi_ = beta1_ * m[i] + (1.0 - beta1_) * gi;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      m[i] = static_cast<float>(mi_);
      v[i] = static_cast<float>(vi);
      p.value[i] -= static_cast<float>(lr * (mi_ / c1) / (std::sqrt(vi / c2) + eps_));
    }
  }
}

LossContext loss_context_at(const TrainConfig& c, std::size_t step) {
  LossContext ctx;
  ctx.weights = c.weights;
  ctx.variance_losses = step >= c.schedule.duration_start_step;
  ctx.prior_strength =
      c.prior_steps == 0 ? 0.0 : std::max(0.0, 1.0 - static_cast<double>(step) / static_cast<double>(c.prior_steps));
  if (step < c.binarization_start) {
    ctx.binarization_scale = 0.0;
  } else {
    const double ramp = static_cast<double>(std::max<std::size_t>(c.binarization_ramp, 1));
    ctx.binarization_scale = std::min(1.0, static_cast<double>(step - c.binarization_start + 1) / ramp);
  }
  return ctx;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t pool, std::size_t batch_size) {
  if (pool == 0) throw InputError("batch_indices: empty pool");
  Rng rng(Rng::derive(Rng::derive(seed, "batch"), step));
  std::vector<std::size_t> out(batch_size);
  for (auto& i : out) i = static_cast<std::size_t>(rng.below(pool));
  return out;
}

BatchGradient batch_gradient(const TtsModel<float>& model, std::span<const Utterance* const> batch,
                             const LossContext& ctx, std::uint64_t graph_seed) {
  if (batch.empty()) throw InputError("batch_gradient: empty batch");
  BatchGradient out;
  std::vector<double> sums(LossBreakdown::names().size() + 1, 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Graph<float> g(Mode::kTrain, Rng::derive(graph_seed, b));
    const ForwardResult<float> r = compute_losses(g, model, *batch[b], ctx);
    g.backward(r.total);
    for (auto& [p, grad] : g.parameter_grads()) {
      auto [it, fresh] = out.grads.try_emplace(p->name, std::move(grad));
      if (!fresh) {
        for (std::size_t i = 0; i < grad.size(); ++i) it->second[i] += grad[i];
      }
    }
    const auto v = r.losses.values();
    for (std::size_t i = 0; i < v.size(); ++i) sums[i] += v[i];
    sums.back() += r.losses.total;
    if (b == 0) out.losses.effective = r.losses.effective;
  }
  const float inv = 1.0f / static_cast<float>(batch.size());
  for (auto& [_, grad] : out.grads) {
    for (auto& x : grad.data()) x *= inv;
  }
  const double n = static_cast<double>(batch.size());
  LossBreakdown& l = out.losses;
  double* fields[] = {&l.mel, &l.postnet_mel, &l.duration, &l.pitch, &l.energy, &l.forward_sum, &l.binarization};
  for (std::size_t i = 0; i < std::size(fields); ++i) *fields[i] = sums[i] / n;
  l.total = sums.back() / n;
  return out;
}

double clip_gradients(std::map<std::string, Tensor<float>>& grads, double max_norm) {
  double sq = 0;
  for (const auto& [_, g] : grads) {
    for (float x : g.data()) sq += static_cast<double>(x) * x;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericalError("gradient norm is not finite");
  if (max_norm > 0 && norm > max_norm) {
    const auto s = static_cast<float>(max_norm / norm);
    for (auto& [_, g] : grads) {
      for (auto& x : g.data()) x *= s;
    }
  }
  return norm;
}

double validation_loss(const TtsModel<float>& model, std::span<const Utterance> utterances, bool use_adapters) {
  if (utterances.empty()) throw InputError("validation_loss: no utterances");
  LossContext ctx;
  ctx.use_adapters = use_adapters;
  double sum = 0;
  for (const Utterance& u : utterances) {
    Graph<float> g(Mode::kEval);
    sum += compute_losses(g, model, u, ctx).losses.postnet_mel;
  }
  return sum / static_cast<double>(utterances.size());
}

std::string log_header() {
  std::string h = "step\tlr\tgrad_norm";
  for (const auto& n : LossBreakdown::names()) h += "\t" + n;
  return h + "\ttotal";
}

std::string format_log_row(const LogRow& row) {
  char buf[64];
  std::string s = std::to_string(row.step);
  auto add = [&](double v) {
    std::snprintf(buf, sizeof buf, "\t%.9g", v);
    s += buf;
  };
  add(row.lr);
  add(row.grad_norm);
  for (double v : row.losses.values()) add(v);
  add(row.losses.total);
  return s;
}

PretrainResult pretrain(const ModelConfig& model_config, const TrainConfig& config, std::uint64_t seed,
                        std::span<const Utterance> train, std::span<const Utterance> val, const Checkpoint* resume,
                        std::size_t stop_step, const TrainHooks& hooks) {
  require_nonempty(train, "pretrain");
  config.schedule.validate();
  PretrainResult out;
  Checkpoint& ckpt = out.checkpoint;
  Adam adam(config.schedule);
  if (resume != nullptr) {
    if (resume->model.strategy.uses_adapters()) throw ConfigError("pretrain: cannot resume from an adapted checkpoint");
    ckpt.model = resume->model;
    ckpt.step = resume->step;
    if (resume->optimizer) adam.restore(*resume->optimizer);
  } else {
    ckpt.model = TtsModel<float>(model_config, seed);
    ckpt.model.stats = compute_variance_stats(train);
  }
  ckpt.model.set_strategy(Strategy::parse("ft"), ckpt.model.dims);

  const std::size_t end = stop_step == 0 ? config.schedule.total_steps : std::min(stop_step, config.schedule.total_steps);
  auto validate = [&](std::size_t step) {
    if (val.empty()) return;
    ValRow row{step, validation_loss(ckpt.model, val)};
    out.validation.push_back(row);
    if (hooks.on_validation) hooks.on_validation(row);
  };
  auto snapshot = [&] {
    ckpt.optimizer = adam.state();
    if (hooks.on_checkpoint) hooks.on_checkpoint(ckpt);
  };

  if (ckpt.step == 0) validate(0);
  Trainer trainer{ckpt.model, adam, seed, train, config.batch_size, config.grad_clip};
  while (ckpt.step < end) {
    const std::size_t step = ckpt.step;
    LogRow row = trainer.step(step, loss_context_at(config, step), lr_at(step, config.schedule));
    ++ckpt.step;
    if (config.log_every != 0 && (step % config.log_every == 0 || ckpt.step == end)) {
      out.log.push_back(row);
      if (hooks.on_log) hooks.on_log(row);
    }
    if (config.val_every != 0 && ckpt.step % config.val_every == 0 && ckpt.step != end) validate(ckpt.step);
    if (config.checkpoint_every != 0 && ckpt.step % config.checkpoint_every == 0 && ckpt.step != end) snapshot();
  }
  if (out.validation.empty() || out.validation.back().step != ckpt.step) validate(ckpt.step);
  ckpt.optimizer = adam.state();
  return out;
}

AdaptResult adapt(const Checkpoint& backbone, const Strategy& strategy, const AdapterDims& dims,
                  const AdaptConfig& config, const LossWeights& weights, std::uint64_t seed,
                  std::span<const Utterance> train, std::span<const Utterance> val, const TrainHooks& hooks) {
  if (backbone.model.strategy.uses_adapters()) {
    throw ConfigError("adapt: backbone checkpoint already carries " + backbone.model.strategy.name());
  }
  AdaptResult out;
  Checkpoint& ckpt = out.checkpoint;
  ckpt.model = backbone.model;
  ckpt.step = 0;
  if (strategy.uses_adapters()) {
    ckpt.model.attach(strategy, dims, seed);
  } else {
    ckpt.model.set_strategy(strategy, dims);
  }
  out.trainable = ckpt.model.params.count(true);

  if (strategy.kind != StrategyKind::kTts0) {
    require_nonempty(train, "adapt");
    ScheduleConfig schedule = config.schedule;
    schedule.constant = true;
    Adam adam(schedule);
    LossContext ctx;
    ctx.weights = weights;
    Trainer trainer{ckpt.model, adam, Rng::derive(seed, "adapt"), train, config.batch_size, config.grad_clip};
    for (std::size_t step = 0; step < config.steps; ++step) {
      LogRow row = trainer.step(step, ctx, lr_at(step, schedule));
      out.log.push_back(row);
      if (hooks.on_log) hooks.on_log(row);
    }
    ckpt.step = config.steps;
    ckpt.optimizer = adam.state();
  }

  // frozen tensors must come back bit-identical
  for (const auto& [name, p] : ckpt.model.params.entries()) {
    if (p->trainable || !backbone.model.params.contains(name)) continue;
    const auto& before = backbone.model.params.at(name).value;
    if (!std::equal(before.data().begin(), before.data().end(), p->value.data().begin())) {
      throw InternalError("adapt: frozen tensor " + name + " changed");
    }
  }
  if (!val.empty()) out.validation = validation_loss(ckpt.model, val);
  return out;
}

}  // namespace spkadapt
