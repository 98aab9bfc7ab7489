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

#include "spkadapt/speaker_embedding.hpp"

#include <cmath>
#include <cstring>

#include "spkadapt/feature_io.hpp"
#include "spkadapt/rng.hpp"

namespace spkadapt {

SyntheticSpeakerEmbedder::SyntheticSpeakerEmbedder(std::size_t n_mels, SyntheticEmbedderConfig config)
    : n_mels_(n_mels), config_(config), projection_(config.dim * n_mels) {
  if (n_mels == 0 || config.dim == 0) throw ConfigError("SyntheticSpeakerEmbedder: zero dimension");
  Rng rng(config_.seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(n_mels));
  for (auto& w : projection_) w = rng.normal() * s;
}

std::vector<float> SyntheticSpeakerEmbedder::embed(const Tensor<float>& mel) const {
  if (mel.rank() != 2 || mel.cols() != n_mels_) {
    throw DimensionError("SyntheticSpeakerEmbedder: mel must be [frames, " + std::to_string(n_mels_) + "], got " +
                         shape_string(mel.shape()));
  }
  if (mel.rows() == 0) throw InputError("SyntheticSpeakerEmbedder: empty mel");
  std::vector<double> stats(n_mels_, 0.0);
  for (std::size_t t = 0; t < mel.rows(); ++t)
    for (std::size_t k = 0; k < n_mels_; ++k) stats[k] += mel(t, k);
  double level = 0;
  for (auto& s : stats) {
    s /= static_cast<double>(mel.rows());
    level += s;
  }
  level /= static_cast<double>(n_mels_);
  for (auto& s : stats) s -= level;

  std::vector<double> v(config_.dim, 0.0);
  double sq = 0;
  for (std::size_t d = 0; d < config_.dim; ++d) {
    for (std::size_t k = 0; k < n_mels_; ++k) v[d] += projection_[d * n_mels_ + k] * stats[k];
    sq += v[d] * v[d];
  }
  // Content hash of the mel bytes seeds the jitter.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float x : mel.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    for (int b = 0; b < 4; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  Rng rng(Rng::derive(config_.seed, h));
  const double rms = std::max(std::sqrt(sq / static_cast<double>(config_.dim)), 1e-3);
  std::vector<float> out(config_.dim);
  for (std::size_t d = 0; d < config_.dim; ++d) out[d] = static_cast<float>(v[d] + config_.jitter * rms * rng.normal());
  return out;
}

std::vector<float> load_speaker_embedding(const std::filesystem::path& path, std::size_t expected_dim) {
  const auto t = read_feature_file<float>(path);
  if (t.rank() != 1 || t.size() != expected_dim) {
    throw DimensionError("speaker embedding " + path.string() + ": expected [" + std::to_string(expected_dim) +
                         "], got " + shape_string(t.shape()));
  }
  return t.storage();
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericalError("cosine_similarity: zero-norm vector");
  return dot / std::sqrt(na * nb);
}

}  // namespace spkadapt
