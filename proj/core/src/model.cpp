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

#include "spkadapt/model.hpp"

#include <algorithm>
#include <cmath>

#include "spkadapt/alignment.hpp"
#include "spkadapt/audio.hpp"
#include "spkadapt/backbone.hpp"
#include "spkadapt/ops.hpp"

namespace spkadapt {

namespace {

template <typename T>
Tensor<T> to_tensor(const Tensor<float>& t) {
  return t.template cast<T>();
}

template <typename T>
Tensor<T> vector_tensor(std::span<const double> v) {
  Tensor<T> t({v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v[i]);
  return t;
}

template <typename T>
Var<T> speaker_var(Graph<T>& g, std::span<const float> embedding, std::size_t dim) {
  if (embedding.size() != dim) {
    throw DimensionError("speaker embedding has " + std::to_string(embedding.size()) + " values, model expects " +
                         std::to_string(dim));
  }
  Tensor<T> t({dim});
  for (std::size_t i = 0; i < dim; ++i) t[i] = static_cast<T>(embedding[i]);
  return g.constant(std::move(t));
}

double checked(double v, const char* component) {
  if (!std::isfinite(v)) throw NumericalError(std::string("loss component '") + component + "' is not finite");
  return v;
}

}  // namespace

template <typename T>
TtsModel<T>::TtsModel(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  config.validate();
  Rng rng(Rng::derive(seed, "backbone"));
  declare_backbone(params, config, rng);
  declare_variance(params, config, rng);
  declare_alignment(params, config, rng);
  params.set_all_trainable(true);
}

template <typename T>
void TtsModel<T>::attach(const Strategy& s, const AdapterDims& d, std::uint64_t seed) {
  if (strategy.uses_adapters()) throw StateError("model already carries strategy " + strategy.name());
  Rng rng(Rng::derive(seed, "strategy:" + s.name()));
  declare_strategy(params, s, config, d, rng);
  set_strategy(s, d);
}

template <typename T>
void TtsModel<T>::set_strategy(const Strategy& s, const AdapterDims& d) {
  strategy = s;
  dims = d;
  apply_trainability(params, s);
}

template <typename T>
std::size_t TtsModel<T>::backbone_parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params.entries()) {
    if (!is_adaptation_parameter(name)) n += p->value.size();
  }
  return n;
}

VarianceStats compute_variance_stats(std::span<const Utterance> utterances) {
  VarianceStats s;
  double emin = INFINITY, emax = -INFINITY, pmin = INFINITY, pmax = -INFINITY;
  for (const auto& u : utterances) {
    for (float e : u.energy) {
      emin = std::min<double>(emin, e);
      emax = std::max<double>(emax, e);
    }
    bool voiced = false;
    for (float f : u.f0) voiced = voiced || f > 0;
    if (!voiced) continue;
    for (double lf : interpolate_log_f0(u.f0)) {
      pmin = std::min(pmin, lf);
      pmax = std::max(pmax, lf);
    }
  }
  if (!std::isfinite(emin) || !std::isfinite(pmin)) {
    throw InputError("variance statistics need at least one frame with energy and one voiced frame");
  }
  if (emax <= emin) emax = emin + 1e-6;
  if (pmax <= pmin) pmax = pmin + 1e-6;
  s.energy_min = emin;
  s.energy_max = emax;
  s.log_f0_min = pmin;
  s.log_f0_max = pmax;
  s.valid = true;
  return s;
}

double LossBreakdown::weighted_sum() const {
  const auto& w = effective;
  return w.mel * mel + w.postnet_mel * postnet_mel + w.duration * duration + w.pitch * pitch + w.energy * energy +
         w.forward_sum * forward_sum + w.binarization * binarization;
}

std::vector<std::string> LossBreakdown::names() {
  return {"mel", "postnet_mel", "duration", "pitch", "energy", "forward_sum", "binarization", "total"};
}

std::vector<double> LossBreakdown::values() const {
  return {mel, postnet_mel, duration, pitch, energy, forward_sum, binarization, total};
}

template <typename T>
ForwardResult<T> compute_losses(Graph<T>& g, const TtsModel<T>& model, const Utterance& u, const LossContext& ctx) {
  const ModelConfig& cfg = model.config;
  model.stats.require();
  if (u.mel.rank() != 2 || u.mel.cols() != cfg.n_mels) {
    throw DimensionError("utterance " + u.id + ": mel " + shape_string(u.mel.shape()) + " does not match n_mels " +
                         std::to_string(cfg.n_mels));
  }
  const std::size_t m = u.frames();
  const Var<T> speaker = speaker_var(g, u.embedding, cfg.speaker_dim);
  AdapterHooks<T> hooks;
  if (ctx.use_adapters && model.strategy.uses_adapters()) {
    hooks = build_hooks(g, model.params, model.strategy, cfg, model.dims, speaker);
  }
  const AdapterHooks<T>* hp = hooks.empty() ? nullptr : &hooks;

  ForwardResult<T> out;
  LossBreakdown& lb = out.losses;
  lb.effective = ctx.weights;
  lb.effective.binarization *= ctx.binarization_scale;
  if (!ctx.variance_losses) lb.effective.duration = lb.effective.pitch = lb.effective.energy = 0;

  // Alignment on ground truth.
  const Var<T> target_mel = g.constant(to_tensor<T>(u.mel));
  const auto align = soft_align(g, model.params, cfg, u.phonemes, target_mel, ctx.prior_strength);
  const auto path = viterbi_path(align.log_probs.value());
  out.durations = path_to_durations(path, u.phonemes.size());
  const T inv_m = T(1) / static_cast<T>(m);
  const Var<T> fs = ops::scale(forward_sum_loss(align.log_probs), inv_m);
  const Var<T> bin = ops::scale(binarization_loss(align.log_probs, path), inv_m);

  Var<T> hidden = encode(g, model.params, cfg, u.phonemes, {}, hp);
  hidden = add_speaker(g, model.params, hidden, speaker);

  std::vector<double> log_d;
  for (auto d : out.durations) log_d.push_back(std::log(static_cast<double>(d)));
  const Var<T> dur = ops::mse_loss(predict_duration(g, model.params, cfg, hidden), g.constant(vector_tensor<T>(log_d)));

  Var<T> x = length_regulate(hidden, out.durations);

  // Pitch: spectrogram, mean and std of the normalized log-F0 contour.
  Var<T> pitch;
  const bool voiced = std::any_of(u.f0.begin(), u.f0.end(), [](float f) { return f > 0; });
  if (voiced) {
    const auto norm = normalize_f0(u.f0);
    const PitchCwt cwt(cfg.cwt_scales);
    const auto pred = predict_pitch(g, model.params, cfg, x, hp);
    const Tensor<double> spec = cwt.decompose(norm.values);
    pitch = ops::add(ops::mse_loss(pred.spectrogram, g.constant(spec.template cast<T>())),
                     ops::add(ops::mse_loss(pred.mean, g.constant(Tensor<T>::scalar(static_cast<T>(norm.mean)))),
                              ops::mse_loss(pred.stddev, g.constant(Tensor<T>::scalar(static_cast<T>(norm.stddev))))));
    std::vector<int> bins;
    for (double lf : interpolate_log_f0(u.f0)) bins.push_back(model.stats.pitch_bin(lf));
    x = ops::add(x, embed_bins(g, model.params, "variance.pitch_embedding", bins));
  }

  std::vector<double> e_target;
  std::vector<int> e_bins;
  for (float e : u.energy) {
    e_target.push_back(model.stats.normalize_energy(e));
    e_bins.push_back(model.stats.energy_bin(e));
  }
  const Var<T> energy =
      ops::mse_loss(predict_energy(g, model.params, cfg, x, hp), g.constant(vector_tensor<T>(e_target)));
  x = ops::add(x, embed_bins(g, model.params, "variance.energy_embedding", e_bins));

  const Var<T> mel = decode(g, model.params, cfg, x, {}, hp);
  const Var<T> post = postnet(g, model.params, cfg, mel);
  const Var<T> mel_loss = ops::l1_loss(mel, target_mel);
  const Var<T> post_loss = ops::l1_loss(post, target_mel);

  lb.mel = checked(mel_loss.value()[0], "mel");
  lb.postnet_mel = checked(post_loss.value()[0], "postnet_mel");
  lb.duration = checked(dur.value()[0], "duration");
  lb.pitch = pitch.valid() ? checked(pitch.value()[0], "pitch") : 0.0;
  lb.energy = checked(energy.value()[0], "energy");
  lb.forward_sum = checked(fs.value()[0], "forward_sum");
  lb.binarization = checked(bin.value()[0], "binarization");

  const auto& w = lb.effective;
  Var<T> total = ops::add(ops::scale(mel_loss, static_cast<T>(w.mel)), ops::scale(post_loss, static_cast<T>(w.postnet_mel)));
  auto accumulate = [&](const Var<T>& term, double weight) {
    if (term.valid() && weight != 0) total = ops::add(total, ops::scale(term, static_cast<T>(weight)));
  };
  accumulate(dur, w.duration);
  accumulate(pitch, w.pitch);
  accumulate(energy, w.energy);
  accumulate(fs, w.forward_sum);
  accumulate(bin, w.binarization);
  out.total = total;
  lb.total = checked(total.value()[0], "total");
  return out;
}

template <typename T>
Synthesis synthesize(const TtsModel<T>& model, std::span<const std::int32_t> phonemes,
                     std::span<const float> speaker_embedding, bool use_adapters) {
  const ModelConfig& cfg = model.config;
  model.stats.require();
  Graph<T> g(Mode::kEval);
  const Var<T> speaker = speaker_var(g, speaker_embedding, cfg.speaker_dim);
  AdapterHooks<T> hooks;
  if (use_adapters && model.strategy.uses_adapters()) {
    hooks = build_hooks(g, model.params, model.strategy, cfg, model.dims, speaker);
  }
  const AdapterHooks<T>* hp = hooks.empty() ? nullptr : &hooks;

  Var<T> hidden = add_speaker(g, model.params, encode(g, model.params, cfg, phonemes, {}, hp), speaker);
  Synthesis out;
  for (T ld : predict_duration(g, model.params, cfg, hidden).value().data()) {
    out.durations.push_back(duration_frames(static_cast<double>(ld)));
  }
  Var<T> x = length_regulate(hidden, out.durations);

  const auto pred = predict_pitch(g, model.params, cfg, x, hp);
  const PitchCwt cwt(cfg.cwt_scales);
  const auto f0 = icwt_reconstruct(cwt, pred.spectrogram.value().template cast<double>(),
                                   static_cast<double>(pred.mean.value()[0]),
                                   std::max(0.0, static_cast<double>(pred.stddev.value()[0])));
  std::vector<int> bins;
  for (double hz : f0) {
    out.f0.push_back(static_cast<float>(std::clamp(hz, kMinF0, kMaxF0)));
    bins.push_back(model.stats.pitch_bin(std::log(hz)));
  }
  x = ops::add(x, embed_bins(g, model.params, "variance.pitch_embedding", bins));

  std::vector<int> e_bins;
  for (T u : predict_energy(g, model.params, cfg, x, hp).value().data()) {
    const double e = std::max(0.0, model.stats.denormalize_energy(static_cast<double>(u)));
    out.energy.push_back(static_cast<float>(e));
    e_bins.push_back(model.stats.energy_bin(e));
  }
  x = ops::add(x, embed_bins(g, model.params, "variance.energy_embedding", e_bins));

  const Var<T> post = postnet(g, model.params, cfg, decode(g, model.params, cfg, x, {}, hp));
  out.mel = post.value().template cast<float>();
  return out;
}

template class TtsModel<float>;
template class TtsModel<double>;
template ForwardResult<float> compute_losses(Graph<float>&, const TtsModel<float>&, const Utterance&,
                                             const LossContext&);
template ForwardResult<double> compute_losses(Graph<double>&, const TtsModel<double>&, const Utterance&,
                                              const LossContext&);
template Synthesis synthesize(const TtsModel<float>&, std::span<const std::int32_t>, std::span<const float>, bool);
template Synthesis synthesize(const TtsModel<double>&, std::span<const std::int32_t>, std::span<const float>, bool);

}  // namespace spkadapt
