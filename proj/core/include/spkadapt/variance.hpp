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

/// Quantization ranges observed on the training split. Energy is the raw
/// per-frame value; pitch is natural-log F0 of voiced (interpolated) frames.
struct VarianceStats {
  bool valid = false;
  double energy_min = 0, energy_max = 1;
  double log_f0_min = 0, log_f0_max = 1;

  void require() const;  // StateError when the ranges were never set
  int energy_bin(double energy) const;
  int pitch_bin(double log_f0) const;
  /// Maps raw energy to the predictor target (e - min) / (max - min).
  double normalize_energy(double energy) const;
  double denormalize_energy(double u) const;
};

/// Repeats row i of `hidden` durations[i] times.
template <typename T>
Var<T> length_regulate(const Var<T>& hidden, std::span<const std::int32_t> durations);

/// Inference rounding: max(1, round(exp(log_duration))).
std::int32_t duration_frames(double log_duration);

struct NormalizedF0 {
  std::vector<double> values;  // zero mean, unit variance log-F0
  double mean = 0;
  double stddev = 1;
};

/// Linear interpolation across unvoiced (0) frames, edges held, then log.
std::vector<double> interpolate_log_f0(std::span<const float> f0);
/// interpolate_log_f0 followed by standardization. The std is clamped to 1e-8.
/// A contour with no voiced frame throws NumericalError.
NormalizedF0 normalize_f0(std::span<const float> f0);

/// Mexican-hat continuous wavelet transform on dyadic scales s_j = s0 * 2^j.
/// Spectrograms are stored frame-major: [frames, scales].
class PitchCwt {
 public:
  explicit PitchCwt(std::size_t scales = 10, double s0 = 1.0);

  std::size_t scales() const noexcept { return scales_.size(); }
  double scale(std::size_t j) const { return scales_.at(j); }

  Tensor<double> decompose(std::span<const double> contour) const;
  /// Inverse transform, re-standardized to zero mean and unit variance.
  std::vector<double> reconstruct(const Tensor<double>& spectrogram) const;

 private:
  std::vector<double> scales_;
};

/// iCWT, then x * stddev + mean, then exp. Returns F0 in Hz per frame.
std::vector<double> icwt_reconstruct(const PitchCwt& cwt, const Tensor<double>& spectrogram, double mean,
                                     double stddev);

template <typename T>
void declare_variance(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng);

/// Log-duration per phoneme, shape [n].
template <typename T>
Var<T> predict_duration(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg, const Var<T>& hidden);

template <typename T>
struct PitchPrediction {
  Var<T> spectrogram;  // [m, scales]
  Var<T> mean;         // [1], log-F0 mean of the utterance
  Var<T> stddev;       // [1], log-F0 std of the utterance
};

/// Frame-level pitch head; adapter site v0 follows its conv stack.
template <typename T>
PitchPrediction<T> predict_pitch(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg,
                                 const Var<T>& frames, const AdapterHooks<T>* hooks = nullptr);

/// Normalized energy per frame, shape [m]; adapter site v1 follows its conv stack.
template <typename T>
Var<T> predict_energy(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg, const Var<T>& frames,
                      const AdapterHooks<T>* hooks = nullptr);

/// Rows of the named 256-row embedding table, one per bin index.
template <typename T>
Var<T> embed_bins(Graph<T>& g, const ParameterStore<T>& store, const std::string& table,
                  std::span<const int> bins);

}  // namespace spkadapt
