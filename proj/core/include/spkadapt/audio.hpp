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
#include <filesystem>
#include <span>
#include <vector>

#include "spkadapt/tensor.hpp"

namespace spkadapt {

inline constexpr int kSampleRate = 16000;
inline constexpr double kMinF0 = 50.0;
inline constexpr double kMaxF0 = 600.0;

struct StftConfig {
  int sample_rate = kSampleRate;
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
  std::size_t n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  /// Normalized autocorrelation peak required to call a frame voiced.
  double voicing_threshold = 0.6;
  /// Frames whose RMS falls below this are unvoiced regardless of periodicity.
  double silence_rms = 1e-4;
};

struct AcousticFeatures {
  Tensor<float> mel;        // [frames, n_mels], natural-log filterbank magnitudes
  std::vector<float> f0;    // Hz, 0 = unvoiced
  std::vector<float> energy;  // L2 norm of each STFT frame's magnitude spectrum
  std::size_t hop = 0;
  std::size_t n_fft = 0;
};

/// Centered STFT (n_fft/2 zero padding on both sides); frame count 1 + len / hop.
AcousticFeatures extract_features(std::span<const float> waveform, const StftConfig& config = {},
                                  int sample_rate = kSampleRate);

/// Triangular HTK-mel filterbank, [n_mels, n_fft / 2 + 1].
Tensor<double> mel_filterbank(const StftConfig& config);

/// Per-frame F0 by normalized autocorrelation; one value per STFT frame.
std::vector<float> track_pitch(std::span<const float> waveform, const StftConfig& config);

/// Rough waveform for listening to a natural-log mel spectrogram: transposed
/// filterbank back to linear magnitudes, then Griffin-Lim phase estimation.
/// This is not a vocoder. Output length is (frames - 1) * hop samples.
std::vector<float> griffin_lim(const Tensor<float>& log_mel, const StftConfig& config, std::size_t iterations = 32);

inline constexpr int kQuantizationBins = 256;

/// floor(256 * (value - min) / (max - min)) clamped to [0, 255].
int quantize(double value, double min, double max);
/// Center of bin `index`.
double dequantize(int index, double min, double max);

/// 16-bit PCM mono RIFF/WAVE reader. Returns samples in [-1, 1].
std::vector<float> read_wav(const std::filesystem::path& path, int* sample_rate_out);
void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate = kSampleRate);

}  // namespace spkadapt
