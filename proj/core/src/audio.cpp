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

#include "spkadapt/audio.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

namespace spkadapt {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

// Frame t covers padded samples [t*hop, t*hop + n_fft) with n_fft/2 zero padding.
std::vector<double> frame_at(std::span<const float> x, std::size_t t, const StftConfig& c) {
  std::vector<double> frame(c.n_fft, 0.0);
  const auto start = static_cast<std::ptrdiff_t>(t * c.hop) - static_cast<std::ptrdiff_t>(c.n_fft / 2);
  for (std::size_t i = 0; i < c.n_fft; ++i) {
    const auto s = start + static_cast<std::ptrdiff_t>(i);
    if (s >= 0 && s < static_cast<std::ptrdiff_t>(x.size())) frame[i] = x[static_cast<std::size_t>(s)];
  }
  return frame;
}

std::size_t frame_count(std::size_t samples, const StftConfig& c) { return 1 + samples / c.hop; }

void validate(std::span<const float> waveform, const StftConfig& config, int sample_rate) {
  if (waveform.empty()) throw InputError("extract_features: empty waveform");
  if (sample_rate != config.sample_rate) {
    throw InputError("extract_features: expected " + std::to_string(config.sample_rate) + " Hz audio, got " +
                     std::to_string(sample_rate));
  }
  if (config.n_fft == 0 || config.hop == 0 || config.n_mels == 0) throw ConfigError("extract_features: zero STFT size");
  for (float s : waveform) {
    if (!std::isfinite(s)) throw InputError("extract_features: non-finite sample");
  }
}

}  // namespace

Tensor<double> mel_filterbank(const StftConfig& c) {
  const std::size_t bins = c.n_fft / 2 + 1;
  Tensor<double> fb({c.n_mels, bins});
  const double m_lo = hz_to_mel(c.f_min), m_hi = hz_to_mel(c.f_max);
  std::vector<double> edges(c.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(c.n_mels + 1));
  }
  for (std::size_t m = 0; m < c.n_mels; ++m) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * c.sample_rate / static_cast<double>(c.n_fft);
      const double up = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double down = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      fb(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

std::vector<float> track_pitch(std::span<const float> x, const StftConfig& c) {
  const std::size_t frames = frame_count(x.size(), c);
  const auto min_lag = static_cast<std::size_t>(std::floor(c.sample_rate / kMaxF0));
  const auto max_lag = static_cast<std::size_t>(std::ceil(c.sample_rate / kMinF0));
  std::vector<float> f0(frames, 0.0f);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::vector<double> frame = frame_at(x, t, c);
    const std::size_t n = frame.size();
    double power = 0;
    for (double v : frame) power += v * v;
    if (std::sqrt(power / static_cast<double>(n)) < c.silence_rms || max_lag + 2 >= n) continue;

    std::vector<double> r(max_lag + 2, 0.0);
    for (std::size_t lag = min_lag; lag <= max_lag + 1; ++lag) {
      double num = 0, e0 = 0, e1 = 0;
      for (std::size_t i = 0; i + lag < n; ++i) {
        num += frame[i] * frame[i + lag];
        e0 += frame[i] * frame[i];
        e1 += frame[i + lag] * frame[i + lag];
      }
      r[lag] = (e0 > 0 && e1 > 0) ? num / std::sqrt(e0 * e1) : 0.0;
    }
    double best = 0;
    for (std::size_t lag = min_lag + 1; lag <= max_lag; ++lag) best = std::max(best, r[lag]);
    if (best < c.voicing_threshold) continue;
    // First local maximum close to the global one avoids octave-down errors.
    for (std::size_t lag = min_lag + 1; lag <= max_lag; ++lag) {
      if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] >= 0.9 * best) {
        const double a = r[lag - 1], b = r[lag], cc = r[lag + 1];
        const double denom = a - 2 * b + cc;
        const double shift = denom != 0.0 ? 0.5 * (a - cc) / denom : 0.0;
        const double hz = c.sample_rate / (static_cast<double>(lag) + std::clamp(shift, -0.5, 0.5));
        if (hz >= kMinF0 && hz <= kMaxF0) f0[t] = static_cast<float>(hz);
        break;
      }
    }
  }
  return f0;
}

AcousticFeatures extract_features(std::span<const float> waveform, const StftConfig& c, int sample_rate) {
  validate(waveform, c, sample_rate);
  const std::size_t frames = frame_count(waveform.size(), c);
  const std::size_t bins = c.n_fft / 2 + 1;
  const auto window = hann(c.n_fft);
  const auto fb = mel_filterbank(c);

  AcousticFeatures out;
  out.hop = c.hop;
  out.n_fft = c.n_fft;
  out.mel = Tensor<float>({frames, c.n_mels});
  out.energy.assign(frames, 0.0f);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  std::vector<double> magnitude(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> frame = frame_at(waveform, t, c);
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] *= window[i];
    fft.fwd(spectrum, frame);
    double sq = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      magnitude[k] = std::abs(spectrum[k]);
      sq += magnitude[k] * magnitude[k];
    }
    out.energy[t] = static_cast<float>(std::sqrt(sq));
    for (std::size_t m = 0; m < c.n_mels; ++m) {
      double acc = 0;
      for (std::size_t k = 0; k < bins; ++k) acc += fb(m, k) * magnitude[k];
      out.mel(t, m) = static_cast<float>(std::log(std::max(acc, 1e-5)));
    }
  }
  out.f0 = track_pitch(waveform, c);
  return out;
}

std::vector<float> griffin_lim(const Tensor<float>& log_mel, const StftConfig& c, std::size_t iterations) {
  if (log_mel.rank() != 2 || log_mel.cols() != c.n_mels) {
    throw DimensionError("griffin_lim: mel must be [frames, " + std::to_string(c.n_mels) + "], got " +
                         shape_string(log_mel.shape()));
  }
  if (log_mel.rows() < 2) throw InputError("griffin_lim: need at least two frames");
  const std::size_t frames = log_mel.rows(), bins = c.n_fft / 2 + 1, n = c.n_fft;
  const auto fb = mel_filterbank(c);
  std::vector<double> mag(frames * bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) {
    double wsum = 0;
    for (std::size_t m = 0; m < c.n_mels; ++m) wsum += fb(m, k);
    if (wsum <= 0) continue;
    for (std::size_t t = 0; t < frames; ++t) {
      double acc = 0;
      for (std::size_t m = 0; m < c.n_mels; ++m) acc += fb(m, k) * std::exp(static_cast<double>(log_mel(t, m)));
      mag[t * bins + k] = acc / wsum;
    }
  }

  const auto window = hann(n);
  const std::size_t samples = (frames - 1) * c.hop;
  std::vector<double> norm(samples, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto pos = static_cast<std::ptrdiff_t>(t * c.hop + i) - static_cast<std::ptrdiff_t>(n / 2);
      if (pos >= 0 && static_cast<std::size_t>(pos) < samples) norm[static_cast<std::size_t>(pos)] += window[i] * window[i];
    }
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> phase(frames * bins, {1.0, 0.0});
  std::vector<std::complex<double>> spectrum(n);
  std::vector<double> frame;
  std::vector<float> signal(samples, 0.0f);
  for (std::size_t it = 0; it <= iterations; ++it) {
    // overlap-add of the current estimate
    std::vector<double> y(samples, 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < bins; ++k) spectrum[k] = mag[t * bins + k] * phase[t * bins + k];
      for (std::size_t k = bins; k < n; ++k) spectrum[k] = std::conj(spectrum[n - k]);
      fft.inv(frame, spectrum);
      for (std::size_t i = 0; i < n; ++i) {
        const auto pos = static_cast<std::ptrdiff_t>(t * c.hop + i) - static_cast<std::ptrdiff_t>(n / 2);
        if (pos >= 0 && static_cast<std::size_t>(pos) < samples) y[static_cast<std::size_t>(pos)] += frame[i] * window[i];
      }
    }
    for (std::size_t i = 0; i < samples; ++i) {
      y[i] = norm[i] > 1e-8 ? y[i] / norm[i] : 0.0;
      signal[i] = static_cast<float>(y[i]);
    }
    if (it == iterations) break;
    for (std::size_t t = 0; t < frames; ++t) {
      frame = frame_at(signal, t, c);
      for (std::size_t i = 0; i < n; ++i) frame[i] *= window[i];
      fft.fwd(spectrum, frame);
      for (std::size_t k = 0; k < bins; ++k) {
        const double a = std::abs(spectrum[k]);
        phase[t * bins + k] = a > 1e-12 ? spectrum[k] / a : std::complex<double>(1.0, 0.0);
      }
    }
  }
  float peak = 0;
  for (float v : signal) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    for (float& v : signal) v *= 0.9f / peak;
  }
  return signal;
}

int quantize(double value, double min, double max) {
  if (!std::isfinite(value)) throw InputError("quantize: non-finite value");
  if (!(max > min)) throw InputError("quantize: max must exceed min");
  const double pos = std::floor(kQuantizationBins * (value - min) / (max - min));
  return static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(kQuantizationBins - 1)));
}

double dequantize(int index, double min, double max) {
  if (!(max > min)) throw InputError("dequantize: max must exceed min");
  index = std::clamp(index, 0, kQuantizationBins - 1);
  return min + (static_cast<double>(index) + 0.5) * (max - min) / kQuantizationBins;
}

namespace {

template <typename U>
U read_le(std::ifstream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  return v;
}

}  // namespace

std::vector<float> read_wav(const std::filesystem::path& path, int* sample_rate_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char tag[4];
  in.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw InputError(path.string() + ": not a RIFF file");
  read_le<std::uint32_t>(in);
  in.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw InputError(path.string() + ": not a WAVE file");
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  while (in.read(tag, 4)) {
    const auto size = read_le<std::uint32_t>(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);
      read_le<std::uint16_t>(in);
      bits = read_le<std::uint16_t>(in);
      in.seekg(size - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (format != 1 || bits != 16 || channels != 1) throw InputError(path.string() + ": expected 16-bit PCM mono");
      std::vector<std::int16_t> pcm(size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(pcm.size() * 2));
      std::vector<float> out(pcm.size());
      for (std::size_t i = 0; i < pcm.size(); ++i) out[i] = static_cast<float>(pcm[i]) / 32768.0f;
      if (sample_rate_out) *sample_rate_out = static_cast<int>(rate);
      return out;
    } else {
      in.seekg(size, std::ios::cur);
    }
  }
  throw InputError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  auto put = [&out](auto v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put(static_cast<std::uint32_t>(36 + data_bytes));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put(std::uint32_t{16});
  put(std::uint16_t{1});
  put(std::uint16_t{1});
  put(static_cast<std::uint32_t>(sample_rate));
  put(static_cast<std::uint32_t>(sample_rate * 2));
  put(std::uint16_t{2});
  put(std::uint16_t{16});
  out.write("data", 4);
  put(data_bytes);
  for (float s : samples) put(static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f)));
}

}  // namespace spkadapt
