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

#include "spkadapt/adapter.hpp"
#include "spkadapt/config.hpp"
#include "spkadapt/graph.hpp"
#include "spkadapt/parameters.hpp"

namespace spkadapt {

/// Validity mask per position (1 valid, 0 padded). Empty means all valid.
template <typename T>
using Mask = std::vector<T>;

/// Declares phoneme embedding, speaker projection, encoder, decoder, mel head
/// and Postnet parameters.
template <typename T>
void declare_backbone(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng);

template <typename T>
void declare_fft_block(ParameterStore<T>& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng);

/// embedding[p_i] + PE[i], shape [n, d_h]. Out-of-vocabulary ids throw InputError.
template <typename T>
Var<T> embed_phonemes(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg,
                      std::span<const std::int32_t> phonemes);

/// Self-attention and conv sub-stacks, each followed by residual + layer norm.
/// The adapter, when given, transforms the conv output before its residual.
template <typename T>
Var<T> fft_block(Graph<T>& g, const ParameterStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                 const Var<T>& x, const Mask<T>& mask, const AdapterVars<T>* adapter = nullptr);

template <typename T>
Var<T> encode(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg,
              std::span<const std::int32_t> phonemes, const Mask<T>& mask = {},
              const AdapterHooks<T>* hooks = nullptr);

/// Length-regulated hidden [m, d_h] -> pre-Postnet mel [m, n_mels].
template <typename T>
Var<T> decode(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg, const Var<T>& x,
              const Mask<T>& mask = {}, const AdapterHooks<T>* hooks = nullptr);

/// mel + residual correction from a tanh conv stack.
template <typename T>
Var<T> postnet(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg, const Var<T>& mel);

/// Projects the speaker embedding [d_1] to d_h and adds it to every row.
template <typename T>
Var<T> add_speaker(Graph<T>& g, const ParameterStore<T>& store, const Var<T>& hidden, const Var<T>& speaker);

}  // namespace spkadapt
