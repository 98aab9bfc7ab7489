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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spkadapt/tensor.hpp"

namespace spkadapt {

enum class EmbeddingMode { kFile, kSynthetic };

struct SyntheticEmbedderConfig {
  std::size_t dim = 256;
  std::uint64_t seed = 0x5eed5eedULL;
  /// Per-utterance jitter, relative to the per-dimension RMS of the clean embedding.
  double jitter = 0.05;
};

/// Stand-in for a trained speaker-verification encoder: a fixed random
/// projection of level-normalized per-bin mel means, plus jitter keyed on the
/// utterance content. Identical mels always map to identical embeddings.
class SyntheticSpeakerEmbedder {
 public:
  SyntheticSpeakerEmbedder(std::size_t n_mels, SyntheticEmbedderConfig config = {});

  std::vector<float> embed(const Tensor<float>& mel) const;

  std::size_t dim() const noexcept { return config_.dim; }
  std::size_t n_mels() const noexcept { return n_mels_; }

 private:
  std::size_t n_mels_;
  SyntheticEmbedderConfig config_;
  std::vector<double> projection_;  // [dim, n_mels]
};

/// File mode: a rank-1 feature file of exactly `expected_dim` values.
std::vector<float> load_speaker_embedding(const std::filesystem::path& path, std::size_t expected_dim);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace spkadapt
