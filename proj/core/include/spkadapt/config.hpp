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
#include <string>
#include <vector>

#include "spkadapt/corpus.hpp"

namespace spkadapt {

/// Backbone hyperparameters. Defaults are the full-size model; desk() gives
/// the laptop-scale variant used by the synthetic experiments.
struct ModelConfig {
  std::size_t vocab_size = 24;
  std::size_t n_mels = 80;
  std::size_t d_h = 256;
  std::size_t heads = 2;
  std::size_t conv_filter = 1024;
  std::size_t conv_kernel1 = 9;
  std::size_t conv_kernel2 = 1;
  std::size_t encoder_layers = 4;
  std::size_t decoder_layers = 6;
  double dropout = 0.1;
  std::size_t speaker_dim = 256;  // d_1

  std::size_t variance_filter = 256;
  std::size_t variance_kernel = 3;
  double variance_dropout = 0.5;
  std::size_t cwt_scales = 10;

  std::size_t postnet_layers = 5;
  std::size_t postnet_channels = 512;
  std::size_t postnet_kernel = 5;
  double postnet_dropout = 0.5;

  std::size_t align_dim = 80;
  std::size_t align_kernel = 3;
  double align_temperature = 0.0005;
  double prior_width = 0.5;  // Gaussian width in phonemes per unit of n/m stretch

  static ModelConfig desk();
  void validate() const;
};

/// Adapter and hypernetwork sizes (d_r, d_2, d_l, d_s).
struct AdapterDims {
  std::size_t d_r = 32;
  std::size_t d_2 = 64;
  std::size_t d_l = 64;
  std::size_t d_s = 8;
  double gain = 1.0;
  double init_scale = 0.02;  // std of the random sampler_d init

  static AdapterDims desk();
};

struct LossWeights {
  double mel = 1.0;
  double postnet_mel = 1.0;
  double duration = 1.0;
  double pitch = 1.0;
  double energy = 1.0;
  double forward_sum = 1.0;
  double binarization = 1.0;
};

struct ScheduleConfig {
  double peak_lr = 1e-3;
  std::size_t warmup_steps = 4000;
  std::vector<std::size_t> milestones{300000, 400000, 500000};
  double anneal_factor = 0.3;
  std::size_t duration_start_step = 50000;
  std::size_t total_steps = 600000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  bool constant = false;  // adaptation runs use a flat rate

  /// Divides every step count by `divisor` (rounding, warmup at least 1).
  ScheduleConfig scaled(std::size_t divisor) const;
  void validate() const;
};

struct TrainConfig {
  ScheduleConfig schedule;
  std::size_t batch_size = 8;
  LossWeights weights;
  double grad_clip = 1.0;
  std::size_t prior_steps = 0;         // diagonal prior active before this step
  std::size_t binarization_start = 0;  // binarization weight ramps 0 -> 1 from here
  std::size_t binarization_ramp = 1;
  std::size_t val_every = 0;
  std::size_t checkpoint_every = 0;
  std::size_t log_every = 1;

  static TrainConfig desk();
};

struct AdaptConfig {
  std::string strategy = "hyper_e/v/d";
  ScheduleConfig schedule;
  std::size_t steps = 500;
  std::size_t batch_size = 8;
  double grad_clip = 1.0;

  static AdaptConfig desk();
};

struct EvalConfig {
  std::size_t mcd_coefficients = 13;
  double ffe_threshold = 0.2;
};

/// Everything a CLI verb needs; echoed verbatim into each run directory.
struct RunConfig {
  std::uint64_t seed = 1;
  CorpusSpec corpus;
  ModelConfig model = ModelConfig::desk();
  AdapterDims adapter = AdapterDims::desk();
  TrainConfig train = TrainConfig::desk();
  AdaptConfig adapt = AdaptConfig::desk();
  EvalConfig eval;
  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path output_dir = "runs";
};

/// JSON round trip. Parsing rejects unknown keys with ConfigError.
std::string to_json(const RunConfig& config, int indent = 2);
RunConfig run_config_from_json(const std::string& text);
std::string to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);
std::string to_json(const AdapterDims& dims);
AdapterDims adapter_dims_from_json(const std::string& text);

RunConfig load_run_config(const std::filesystem::path& path);
/// Applies `dotted.key=value` overrides; the value is parsed as JSON when it
/// parses, otherwise taken as a string. Unknown keys throw ConfigError.
RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& overrides);
/// FNV-1a of the canonical JSON, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace spkadapt
