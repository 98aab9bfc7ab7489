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
#include <vector>

#include "spkadapt/config.hpp"
#include "spkadapt/graph.hpp"
#include "spkadapt/parameters.hpp"

namespace spkadapt {

/// Soft phoneme-to-frame alignment. log_probs is [n, m]: column t holds the
/// log distribution over the n phonemes for frame t.
template <typename T>
struct AlignmentMap {
  Var<T> log_probs;
  double prior_strength = 0;
};

template <typename T>
void declare_alignment(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng);

/// Log of a Gaussian band around the proportional diagonal, [m, n], scaled by
/// `strength` (0 disables it).
template <typename T>
Tensor<T> diagonal_log_prior(std::size_t n, std::size_t m, double width, double strength);

/// Alignment from already-projected features: text [n, d], mel [m, d].
/// affinity = temperature * -|mel_t - text_i|^2, plus the prior, softmaxed over
/// phonemes per frame.
template <typename T>
AlignmentMap<T> align_features(const Var<T>& text, const Var<T>& mel, double temperature,
                               const Tensor<T>* log_prior = nullptr, double prior_strength = 0);

/// Full soft alignment: conv projections of phoneme embeddings and of the
/// ground-truth mel, then align_features.
template <typename T>
AlignmentMap<T> soft_align(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg,
                           std::span<const std::int32_t> phonemes, const Var<T>& mel, double prior_strength);

/// -log of the summed probability of all monotonic complete paths.
/// m < n throws InfeasibleAlignmentError.
template <typename T>
Var<T> forward_sum_loss(const Var<T>& log_probs);

/// Most likely monotonic path as a phoneme index per frame. Ties stay on
/// the current phoneme.
template <typename T>
std::vector<std::int32_t> viterbi_path(const Tensor<T>& log_probs);

std::vector<std::int32_t> path_to_durations(std::span<const std::int32_t> path, std::size_t n);

template <typename T>
std::vector<std::int32_t> viterbi_durations(const Tensor<T>& log_probs) {
  return path_to_durations(viterbi_path(log_probs), log_probs.rows());
}

/// -sum_t log p(path[t] | t). An empty path throws StateError.
template <typename T>
Var<T> binarization_loss(const Var<T>& log_probs, std::span<const std::int32_t> path);

}  // namespace spkadapt
