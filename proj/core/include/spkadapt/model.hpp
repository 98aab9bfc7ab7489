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
#include <span>
#include <string>
#include <vector>

#include "spkadapt/adaptation.hpp"
#include "spkadapt/config.hpp"
#include "spkadapt/corpus.hpp"
#include "spkadapt/graph.hpp"
#include "spkadapt/parameters.hpp"
#include "spkadapt/variance.hpp"

namespace spkadapt {

/// Backbone (embedding, encoder, variance adapter, decoder, Postnet,
/// aligner) plus an optional adaptation strategy, over one parameter store.
template <typename T>
class TtsModel {
 public:
  TtsModel() = default;
  TtsModel(const ModelConfig& config, std::uint64_t seed);

  /// Adds the strategy's parameters and sets trainability. A model carries at
  /// most one adapter/hyper strategy.
  void attach(const Strategy& strategy, const AdapterDims& dims, std::uint64_t seed);
  /// Same flags without declaring anything (parameters already loaded).
  void set_strategy(const Strategy& strategy, const AdapterDims& dims);

  std::size_t backbone_parameter_count() const;

  ModelConfig config;
  AdapterDims dims;
  Strategy strategy;
  ParameterStore<T> params;
  VarianceStats stats;
};

/// Ranges of raw energy and interpolated log-F0 over the given utterances.
VarianceStats compute_variance_stats(std::span<const Utterance> utterances);

struct LossContext {
  LossWeights weights;
  bool variance_losses = true;  // duration, pitch and energy terms
  double prior_strength = 0;
  double binarization_scale = 1;  // multiplies weights.binarization
  bool use_adapters = true;
};

struct LossBreakdown {
  double mel = 0, postnet_mel = 0, duration = 0, pitch = 0, energy = 0, forward_sum = 0, binarization = 0;
  double total = 0;
  LossWeights effective;  // weights after gating

  /// Recomputes sum_i effective_i * component_i.
  double weighted_sum() const;
  static std::vector<std::string> names();
  std::vector<double> values() const;
};

template <typename T>
struct ForwardResult {
  Var<T> total;
  LossBreakdown losses;
  std::vector<std::int32_t> durations;  // hard alignment used for length regulation
};

/// Teacher-forced training objective for one utterance: alignment on the
/// ground-truth mel gives the durations; ground-truth pitch and energy feed
/// the embeddings. Non-finite components throw NumericalError naming them.
template <typename T>
ForwardResult<T> compute_losses(Graph<T>& g, const TtsModel<T>& model, const Utterance& utterance,
                                const LossContext& ctx);

struct Synthesis {
  Tensor<float> mel;  // post-Postnet [m, n_mels]
  std::vector<float> f0;
  std::vector<float> energy;
  std::vector<std::int32_t> durations;
};

/// Inference: predicted durations, pitch (via iCWT) and energy.
template <typename T>
Synthesis synthesize(const TtsModel<T>& model, std::span<const std::int32_t> phonemes,
                     std::span<const float> speaker_embedding, bool use_adapters = true);

/// Converts between precisions, keeping names, flags and stats.
template <typename U, typename T>
TtsModel<U> cast_model(const TtsModel<T>& model) {
  TtsModel<U> out;
  out.config = model.config;
  out.dims = model.dims;
  out.strategy = model.strategy;
  out.params = model.params.template cast<U>();
  out.stats = model.stats;
  return out;
}

}  // namespace spkadapt
