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

#include "spkadapt/variance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spkadapt/audio.hpp"
#include "spkadapt/nn.hpp"
#include "spkadapt/ops.hpp"

namespace spkadapt {

namespace {

constexpr double kCdelta = 3.541;      // reconstruction factor, Mexican hat
constexpr double kPsi0 = 0.867325;     // psi(0)

double mexican_hat(double t) {
  static const double norm = 2.0 / (std::sqrt(3.0) * std::pow(std::numbers::pi, 0.25));
  return norm * (1.0 - t * t) * std::exp(-0.5 * t * t);
}

template <typename T>
void declare_conv_stack(ParameterStore<T>& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
  nn::declare_conv(store, prefix + ".conv0", cfg.d_h, cfg.variance_filter, cfg.variance_kernel, rng);
  nn::declare_layer_norm(store, prefix + ".norm0", cfg.variance_filter);
  nn::declare_conv(store, prefix + ".conv1", cfg.variance_filter, cfg.variance_filter, cfg.variance_kernel, rng);
  nn::declare_layer_norm(store, prefix + ".norm1", cfg.variance_filter);
}

// conv -> ReLU -> layer norm -> dropout, twice.
template <typename T>
Var<T> conv_stack(Graph<T>& g, const ParameterStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                  const Var<T>& x) {
  Var<T> h = x;
  for (int l = 0; l < 2; ++l) {
    const std::string i = std::to_string(l);
    h = ops::relu(nn::conv(g, store, prefix + ".conv" + i, h, cfg.variance_kernel));
    h = ops::dropout(nn::layer_norm(g, store, prefix + ".norm" + i, h), cfg.variance_dropout);
  }
  return h;
}

}  // namespace

void VarianceStats::require() const {
  if (!valid) throw StateError("variance statistics (energy/pitch quantization ranges) are not set");
}

int VarianceStats::energy_bin(double energy) const {
  require();
  return quantize(energy, energy_min, energy_max);
}

int VarianceStats::pitch_bin(double log_f0) const {
  require();
  return quantize(log_f0, log_f0_min, log_f0_max);
}

double VarianceStats::normalize_energy(double energy) const {
  require();
  return (energy - energy_min) / (energy_max - energy_min);
}

double VarianceStats::denormalize_energy(double u) const {
  require();
  return energy_min + u * (energy_max - energy_min);
}

template <typename T>
Var<T> length_regulate(const Var<T>& hidden, std::span<const std::int32_t> durations) {
  if (durations.size() != hidden.rows()) {
    throw DimensionError("length_regulate: " + std::to_string(durations.size()) + " durations for " +
                         std::to_string(hidden.rows()) + " rows");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 0) throw InputError("length_regulate: negative duration at " + std::to_string(i));
    idx.insert(idx.end(), static_cast<std::size_t>(durations[i]), i);
  }
  if (idx.empty()) throw InputError("length_regulate: durations sum to zero");
  return ops::gather_rows(hidden, std::span<const std::size_t>(idx));
}

std::int32_t duration_frames(double log_duration) {
  if (!std::isfinite(log_duration)) throw NumericalError("duration_frames: non-finite log duration");
  const double d = std::round(std::exp(std::min(log_duration, 20.0)));
  return static_cast<std::int32_t>(std::max(1.0, d));
}

std::vector<double> interpolate_log_f0(std::span<const float> f0) {
  std::vector<std::size_t> voiced;
  for (std::size_t t = 0; t < f0.size(); ++t) {
    if (!std::isfinite(f0[t]) || f0[t] < 0) throw InputError("f0 contour holds a negative or non-finite value");
    if (f0[t] > 0) voiced.push_back(t);
  }
  if (voiced.empty()) throw NumericalError("normalize_f0: contour has no voiced frame");
  std::vector<double> hz(f0.size());
  for (std::size_t t = 0; t < voiced.front(); ++t) hz[t] = f0[voiced.front()];
  for (std::size_t t = voiced.back(); t < f0.size(); ++t) hz[t] = f0[voiced.back()];
  for (std::size_t k = 0; k + 1 < voiced.size(); ++k) {
    const std::size_t a = voiced[k], b = voiced[k + 1];
    for (std::size_t t = a; t < b; ++t) {
      const double w = static_cast<double>(t - a) / static_cast<double>(b - a);
      hz[t] = (1 - w) * f0[a] + w * f0[b];
    }
  }
  for (auto& v : hz) v = std::log(v);
  return hz;
}

NormalizedF0 normalize_f0(std::span<const float> f0) {
  NormalizedF0 out;
  out.values = interpolate_log_f0(f0);
  const double n = static_cast<double>(out.values.size());
  // Offset from the first value keeps constant contours exactly zero.
  const double anchor = out.values.front();
  double shift = 0;
  for (double v : out.values) shift += v - anchor;
  const double mean = anchor + shift / n;
  double var = 0;
  for (double v : out.values) var += (v - mean) * (v - mean);
  out.mean = mean;
  out.stddev = std::max(std::sqrt(var / n), 1e-8);
  for (auto& v : out.values) v = (v - mean) / out.stddev;
  return out;
}

PitchCwt::PitchCwt(std::size_t scales, double s0) {
  if (scales == 0 || !(s0 > 0)) throw ConfigError("PitchCwt: need at least one scale and s0 > 0");
  for (std::size_t j = 0; j < scales; ++j) scales_.push_back(s0 * std::ldexp(1.0, static_cast<int>(j)));
}

Tensor<double> PitchCwt::decompose(std::span<const double> x) const {
  const std::size_t m = x.size(), S = scales_.size();
  Tensor<double> w({m, S});
  for (std::size_t j = 0; j < S; ++j) {
    const double s = scales_[j];
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(5.0 * s));
    const double norm = 1.0 / std::sqrt(s);
    for (std::size_t n = 0; n < m; ++n) {
      const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(n) - reach);
      const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(m) - 1, static_cast<std::ptrdiff_t>(n) + reach);
      double acc = 0;
      for (auto k = lo; k <= hi; ++k) {
        acc += x[static_cast<std::size_t>(k)] * mexican_hat(static_cast<double>(k - static_cast<std::ptrdiff_t>(n)) / s);
      }
      w(n, j) = acc * norm;
    }
  }
  return w;
}

std::vector<double> PitchCwt::reconstruct(const Tensor<double>& w) const {
  if (w.rank() != 2 || w.cols() != scales_.size()) {
    throw DimensionError("PitchCwt::reconstruct: expected [frames, " + std::to_string(scales_.size()) + "], got " +
                         shape_string(w.shape()));
  }
  const std::size_t m = w.rows();
  std::vector<double> x(m, 0.0);
  for (std::size_t n = 0; n < m; ++n) {
    for (std::size_t j = 0; j < scales_.size(); ++j) x[n] += w(n, j) / std::sqrt(scales_[j]);
    x[n] /= kCdelta * kPsi0;  // dj = 1
  }
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(m);
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(m));
  for (auto& v : x) v = sd > 1e-12 ? (v - mean) / sd : 0.0;
  return x;
}

std::vector<double> icwt_reconstruct(const PitchCwt& cwt, const Tensor<double>& spectrogram, double mean,
                                     double stddev) {
  if (!(stddev >= 0)) throw InputError("icwt_reconstruct: negative or NaN standard deviation");
  auto x = cwt.reconstruct(spectrogram);
  for (auto& v : x) v = std::exp(v * stddev + mean);
  return x;
}

template <typename T>
void declare_variance(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng) {
  declare_conv_stack(store, "variance.duration", cfg, rng);
  nn::declare_linear(store, "variance.duration.out", cfg.variance_filter, 1, rng);
  declare_conv_stack(store, "variance.pitch", cfg, rng);
  nn::declare_linear(store, "variance.pitch.spec", cfg.variance_filter, cfg.cwt_scales, rng);
  nn::declare_linear(store, "variance.pitch.mean", cfg.variance_filter, 1, rng);
  nn::declare_linear(store, "variance.pitch.std", cfg.variance_filter, 1, rng);
  declare_conv_stack(store, "variance.energy", cfg, rng);
  nn::declare_linear(store, "variance.energy.out", cfg.variance_filter, 1, rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.d_h));
  store.add("variance.pitch_embedding", nn::normal_tensor<T>({kQuantizationBins, cfg.d_h}, s, rng));
  store.add("variance.energy_embedding", nn::normal_tensor<T>({kQuantizationBins, cfg.d_h}, s, rng));
}

template <typename T>
Var<T> predict_duration(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg, const Var<T>& hidden) {
  const Var<T> h = conv_stack(g, store, "variance.duration", cfg, hidden);
  return ops::reshape(nn::linear(g, store, "variance.duration.out", h), Shape{hidden.rows()});
}

template <typename T>
PitchPrediction<T> predict_pitch(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg,
                                 const Var<T>& frames, const AdapterHooks<T>* hooks) {
  Var<T> h = conv_stack(g, store, "variance.pitch", cfg, frames);
  if (const auto* a = find_hook(hooks, SiteId{SiteModule::kVariance, 0})) h = adapter_forward(h, *a);
  PitchPrediction<T> p;
  p.spectrogram = nn::linear(g, store, "variance.pitch.spec", h);
  const Var<T> pooled = ops::mean_rows(h);
  p.mean = ops::reshape(nn::linear(g, store, "variance.pitch.mean", pooled), Shape{1});
  p.stddev = ops::reshape(nn::linear(g, store, "variance.pitch.std", pooled), Shape{1});
  return p;
}

template <typename T>
Var<T> predict_energy(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg, const Var<T>& frames,
                      const AdapterHooks<T>* hooks) {
  Var<T> h = conv_stack(g, store, "variance.energy", cfg, frames);
  if (const auto* a = find_hook(hooks, SiteId{SiteModule::kVariance, 1})) h = adapter_forward(h, *a);
  return ops::reshape(nn::linear(g, store, "variance.energy.out", h), Shape{frames.rows()});
}

template <typename T>
Var<T> embed_bins(Graph<T>& g, const ParameterStore<T>& store, const std::string& table, std::span<const int> bins) {
  std::vector<std::size_t> idx(bins.begin(), bins.end());
  return ops::gather_rows(nn::param(g, store, table), std::span<const std::size_t>(idx));
}

#define SPKADAPT_INSTANTIATE(T)                                                                                 \
  template Var<T> length_regulate(const Var<T>&, std::span<const std::int32_t>);                               \
  template void declare_variance(ParameterStore<T>&, const ModelConfig&, Rng&);                                \
  template Var<T> predict_duration(Graph<T>&, const ParameterStore<T>&, const ModelConfig&, const Var<T>&);    \
  template PitchPrediction<T> predict_pitch(Graph<T>&, const ParameterStore<T>&, const ModelConfig&,           \
                                            const Var<T>&, const AdapterHooks<T>*);                            \
  template Var<T> predict_energy(Graph<T>&, const ParameterStore<T>&, const ModelConfig&, const Var<T>&,       \
                                 const AdapterHooks<T>*);                                                      \
  template Var<T> embed_bins(Graph<T>&, const ParameterStore<T>&, const std::string&, std::span<const int>);

SPKADAPT_INSTANTIATE(float)
SPKADAPT_INSTANTIATE(double)
#undef SPKADAPT_INSTANTIATE

}  // namespace spkadapt
