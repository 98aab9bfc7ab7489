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

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spkadapt/checkpoint.hpp"
#include "spkadapt/config.hpp"
#include "spkadapt/model.hpp"

namespace spkadapt {

/// Linear warmup from 0, then the peak rate scaled by anneal_factor at each
/// milestone passed. A constant schedule returns the peak everywhere.
double lr_at(std::size_t step, const ScheduleConfig& schedule);

class Adam {
 public:
  explicit Adam(const ScheduleConfig& schedule) : beta1_(schedule.beta1), beta2_(schedule.beta2), eps_(schedule.epsilon) {}

  /// Applies one update to every named tensor in `grads`.
  void update(ParameterStore<float>& store, const std::map<std::string, Tensor<float>>& grads, double lr);

  const AdamState& state() const noexcept { return state_; }
  void restore(AdamState state) { state_ = std::move(state); }

 private:
  double beta1_, beta2_, eps_;
  AdamState state_;
};

/// Prior, gating and binarization ramp for a pretraining step.
LossContext loss_context_at(const TrainConfig& config, std::size_t step);

/// Batch members for `step`, drawn with replacement from a stream derived
/// from (seed, step), so a resumed run sees the same batches.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t pool, std::size_t batch_size);

struct BatchGradient {
  LossBreakdown losses;  // batch mean
  std::map<std::string, Tensor<float>> grads;  // gradient of the batch-mean total
};

/// One training-mode graph per utterance; gradients are summed in batch order.
BatchGradient batch_gradient(const TtsModel<float>& model, std::span<const Utterance* const> batch,
                             const LossContext& ctx, std::uint64_t graph_seed);

/// Rescales to at most `max_norm` in global L2 norm; returns the norm before.
double clip_gradients(std::map<std::string, Tensor<float>>& grads, double max_norm);

/// Mean teacher-forced post-Postnet L1 mel loss in eval mode.
double validation_loss(const TtsModel<float>& model, std::span<const Utterance> utterances, bool use_adapters = true);

struct LogRow {
  std::size_t step = 0;
  double lr = 0;
  double grad_norm = 0;
  LossBreakdown losses;
};

struct ValRow {
  std::size_t step = 0;
  double loss = 0;
};

/// Tab-separated loss log: step, lr, grad_norm, each component, total.
std::string log_header();
std::string format_log_row(const LogRow& row);

struct TrainHooks {
  std::function<void(const LogRow&)> on_log;
  std::function<void(const ValRow&)> on_validation;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
  std::vector<ValRow> validation;
};

/// Trains the backbone from scratch, or from `resume` when given, up to
/// `stop_step` (0 means the schedule's total). Validation runs at step 0,
/// every val_every steps, and at the end.
PretrainResult pretrain(const ModelConfig& model_config, const TrainConfig& config, std::uint64_t seed,
                        std::span<const Utterance> train, std::span<const Utterance> val,
                        const Checkpoint* resume = nullptr, std::size_t stop_step = 0, const TrainHooks& hooks = {});

struct AdaptResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
  std::size_t trainable = 0;
  double validation = 0;
};

/// Attaches `strategy` to a copy of the backbone and trains only its
/// parameters. Throws ConfigError when the backbone already carries adapters
/// and InternalError if any frozen tensor changed.
AdaptResult adapt(const Checkpoint& backbone, const Strategy& strategy, const AdapterDims& dims,
                  const AdaptConfig& config, const LossWeights& weights, std::uint64_t seed,
                  std::span<const Utterance> train, std::span<const Utterance> val, const TrainHooks& hooks = {});

}  // namespace spkadapt
