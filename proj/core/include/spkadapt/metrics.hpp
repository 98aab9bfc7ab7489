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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spkadapt/model.hpp"
#include "spkadapt/speaker_embedding.hpp"

namespace spkadapt {

struct MeanWithError {
  double mean = 0;
  double stderr_ = 0;  // standard error of the mean
  std::size_t count = 0;
};

MeanWithError mean_with_error(std::span<const double> values);

struct CosResult {
  MeanWithError score;  // x100
  std::vector<std::size_t> excluded;  // pairs with a zero-norm embedding
};

/// Mean pairwise cosine similarity x100.
CosResult cos_metric(std::span<const std::vector<float>> synthesized, std::span<const std::vector<float>> reference);

/// Percentage of frames with a voicing mismatch, or both voiced and
/// |f0_p - f0_r| > threshold * f0_r. Zero marks unvoiced frames.
double ffe_metric(std::span<const float> predicted, std::span<const float> reference, double threshold = 0.2);

/// Orthonormal DCT-II of each log-mel frame, coefficients 1..count.
Tensor<double> mel_cepstrum(const Tensor<float>& log_mel, std::size_t count);

/// Frame pairs of the minimum-cost monotonic warping between two sequences
/// with the given [a, b] cost matrix.
std::vector<std::pair<std::size_t, std::size_t>> dtw_path(const Tensor<double>& cost);

struct McdResult {
  double mcd = 0;  // dB
  std::vector<std::pair<std::size_t, std::size_t>> path;
};

/// Mean over DTW-paired frames of (10/ln10) sqrt(2 sum_k (c_k - c'_k)^2).
McdResult mcd_metric(const Tensor<float>& predicted, const Tensor<float>& reference, std::size_t coefficients = 13);

struct EvalRow {
  std::string id;
  double cos = 0;  // x100
  double ffe = 0;
  double mcd = 0;
  std::size_t frames = 0;
  std::string error;  // set when synthesis or scoring failed
};

struct EvalReport {
  std::string strategy;
  std::vector<EvalRow> rows;
  MeanWithError cos, ffe, mcd;
  std::size_t trainable = 0;
  double trainable_percent = 0;  // of backbone parameters
  std::size_t failures = 0;
};

/// Synthesizes each reference utterance from its phonemes and embedding and
/// scores it. F0 frames are paired along the mel DTW path. Failures are kept
/// as rows with `error` set and left out of the aggregates.
EvalReport evaluate(const TtsModel<float>& model, std::span<const Utterance> references,
                    const SyntheticSpeakerEmbedder& embedder, std::size_t trainable, std::size_t coefficients = 13,
                    double ffe_threshold = 0.2);

std::string report_table(const EvalReport& report);
std::string report_json(const EvalReport& report);

/// All generated adapter weights for one speaker embedding, sites in order,
/// each site as W_d, b_d, W_u, b_u.
std::vector<float> generated_weights(const TtsModel<float>& model, std::span<const float> speaker_embedding);

/// Same weights split by site name ("e0", "v1", ...).
std::vector<std::pair<std::string, std::vector<float>>> generated_site_weights(
    const TtsModel<float>& model, std::span<const float> speaker_embedding);

struct ClusterStats {
  double within = 0;  // mean cosine over same-label pairs
  double cross = 0;   // mean cosine over different-label pairs
};

ClusterStats cluster_cosines(std::span<const std::vector<float>> rows, std::span<const std::string> labels);

}  // namespace spkadapt
