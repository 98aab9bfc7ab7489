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

#include "spkadapt/backbone.hpp"

#include <cmath>
#include <string_view>

#include "spkadapt/nn.hpp"
#include "spkadapt/ops.hpp"

namespace spkadapt {

namespace {

template <typename T>
bool all_valid(const Mask<T>& mask) {
  for (T m : mask)
    if (m == T(0)) return false;
  return true;
}

template <typename T>
Var<T> apply_mask(const Var<T>& x, const Mask<T>& mask) {
  if (mask.empty()) return x;
  if (mask.size() != x.rows()) {
    throw DimensionError("mask length " + std::to_string(mask.size()) + " != sequence length " +
                         std::to_string(x.rows()));
  }
  return ops::scale_rows(x, std::span<const T>(mask));
}

template <typename T>
Var<T> self_attention(Graph<T>& g, const ParameterStore<T>& store, const std::string& prefix,
                      const ModelConfig& cfg, const Var<T>& x, const Mask<T>& mask) {
  const std::size_t n = x.rows(), dk = cfg.d_h / cfg.heads;
  const Var<T> q = nn::linear(g, store, prefix + ".q", x);
  const Var<T> k = ops::matmul(x, nn::param(g, store, prefix + ".k.w"));
  const Var<T> v = nn::linear(g, store, prefix + ".v", x);
  Var<T> bias;
  if (!mask.empty() && !all_valid(mask)) {
    Tensor<T> b({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) b(i, j) = mask[j] == T(0) ? T(-1e9) : T(0);
    bias = g.constant(std::move(b));
  }
  std::vector<Var<T>> heads;
  const T inv = T(1) / std::sqrt(static_cast<T>(dk));
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Var<T> qh = ops::slice_cols(q, h * dk, dk);
    const Var<T> kh = ops::slice_cols(k, h * dk, dk);
    const Var<T> vh = ops::slice_cols(v, h * dk, dk);
    Var<T> scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv);
    if (bias.valid()) scores = ops::add(scores, bias);
    heads.push_back(ops::matmul(ops::softmax_rows(scores), vh));
  }
  const Var<T> joined = heads.size() == 1 ? heads.front() : ops::concat_cols(std::span<const Var<T>>(heads));
  return nn::linear(g, store, prefix + ".out", joined);
}

template <typename T>
Var<T> position_encoding(Graph<T>& g, const Var<T>& x) {
  return ops::add(x, g.constant(ops::sinusoid_table<T>(x.rows(), x.cols())));
}

}  // namespace

template <typename T>
void declare_fft_block(ParameterStore<T>& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
  // Keys carry no bias: it would shift every score in a row equally.
  for (const char* p : {".attn.q", ".attn.k", ".attn.v", ".attn.out"}) {
    nn::declare_linear(store, prefix + p, cfg.d_h, cfg.d_h, rng, std::string_view(p) != ".attn.k");
  }
  nn::declare_layer_norm(store, prefix + ".attn_norm", cfg.d_h);
  nn::declare_conv(store, prefix + ".conv1", cfg.d_h, cfg.conv_filter, cfg.conv_kernel1, rng);
  nn::declare_conv(store, prefix + ".conv2", cfg.conv_filter, cfg.d_h, cfg.conv_kernel2, rng);
  nn::declare_layer_norm(store, prefix + ".conv_norm", cfg.d_h);
}

template <typename T>
void declare_backbone(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  store.add("embedding", nn::normal_tensor<T>({cfg.vocab_size, cfg.d_h}, 1.0 / std::sqrt(double(cfg.d_h)), rng));
  nn::declare_linear(store, "speaker_proj", cfg.speaker_dim, cfg.d_h, rng);
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    declare_fft_block(store, "encoder.block" + std::to_string(l), cfg, rng);
  }
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    declare_fft_block(store, "decoder.block" + std::to_string(l), cfg, rng);
  }
  nn::declare_linear(store, "decoder.mel", cfg.d_h, cfg.n_mels, rng);
  for (std::size_t l = 0; l < cfg.postnet_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.n_mels : cfg.postnet_channels;
    const std::size_t out = l + 1 == cfg.postnet_layers ? cfg.n_mels : cfg.postnet_channels;
    const std::string name = "postnet.conv" + std::to_string(l);
    if (l + 1 == cfg.postnet_layers) {
      store.add(name + ".w", Tensor<T>({cfg.postnet_kernel * in, out}));
      store.add(name + ".b", Tensor<T>({out}));
    } else {
      nn::declare_conv(store, name, in, out, cfg.postnet_kernel, rng);
    }
  }
}

template <typename T>
Var<T> embed_phonemes(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg,
                      std::span<const std::int32_t> phonemes) {
  if (phonemes.empty()) throw InputError("embed_phonemes: empty phoneme sequence");
  std::vector<std::size_t> idx;
  idx.reserve(phonemes.size());
  for (auto p : phonemes) {
    if (p < 0 || static_cast<std::size_t>(p) >= cfg.vocab_size) {
      throw InputError("embed_phonemes: phoneme id " + std::to_string(p) + " outside vocabulary of " +
                       std::to_string(cfg.vocab_size));
    }
    idx.push_back(static_cast<std::size_t>(p));
  }
  const Var<T> e = ops::gather_rows(nn::param(g, store, "embedding"), std::span<const std::size_t>(idx));
  return position_encoding(g, e);
}

template <typename T>
Var<T> fft_block(Graph<T>& g, const ParameterStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                 const Var<T>& x_in, const Mask<T>& mask, const AdapterVars<T>* adapter) {
  const Var<T> x = apply_mask(x_in, mask);
  Var<T> a = self_attention(g, store, prefix + ".attn", cfg, x, mask);
  a = ops::dropout(a, cfg.dropout);
  const Var<T> x1 = apply_mask(nn::layer_norm(g, store, prefix + ".attn_norm", ops::add(x, a)), mask);

  Var<T> c = apply_mask(ops::relu(nn::conv(g, store, prefix + ".conv1", x1, cfg.conv_kernel1)), mask);
  c = ops::dropout(nn::conv(g, store, prefix + ".conv2", c, cfg.conv_kernel2), cfg.dropout);
  if (adapter != nullptr) c = adapter_forward(c, *adapter);
  return apply_mask(nn::layer_norm(g, store, prefix + ".conv_norm", ops::add(x1, c)), mask);
}

template <typename T>
Var<T> encode(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg,
              std::span<const std::int32_t> phonemes, const Mask<T>& mask, const AdapterHooks<T>* hooks) {
  if (!mask.empty()) {
    bool any = false;
    for (T m : mask) any = any || m != T(0);
    if (!any) throw InputError("encode: every position is masked");
  }
  Var<T> x = embed_phonemes(g, store, cfg, phonemes);
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    x = fft_block(g, store, "encoder.block" + std::to_string(l), cfg, x, mask,
                  find_hook(hooks, SiteId{SiteModule::kEncoder, l}));
  }
  return x;
}

template <typename T>
Var<T> decode(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg, const Var<T>& x_in,
              const Mask<T>& mask, const AdapterHooks<T>* hooks) {
  if (x_in.rows() == 0 || x_in.value().empty()) throw InputError("decode: zero-length input");
  if (x_in.shape().size() != 2 || x_in.cols() != cfg.d_h) {
    throw DimensionError("decode: expected [m, " + std::to_string(cfg.d_h) + "], got " + shape_string(x_in.shape()));
  }
  Var<T> x = position_encoding(g, x_in);
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    x = fft_block(g, store, "decoder.block" + std::to_string(l), cfg, x, mask,
                  find_hook(hooks, SiteId{SiteModule::kDecoder, l}));
  }
  return nn::linear(g, store, "decoder.mel", x);
}

template <typename T>
Var<T> postnet(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg, const Var<T>& mel) {
  Var<T> h = mel;
  for (std::size_t l = 0; l < cfg.postnet_layers; ++l) {
    h = nn::conv(g, store, "postnet.conv" + std::to_string(l), h, cfg.postnet_kernel);
    if (l + 1 < cfg.postnet_layers) h = ops::dropout(ops::tanh(h), cfg.postnet_dropout);
  }
  return ops::add(mel, h);
}

template <typename T>
Var<T> add_speaker(Graph<T>& g, const ParameterStore<T>& store, const Var<T>& hidden, const Var<T>& speaker) {
  const Var<T> row = ops::reshape(speaker, Shape{1, speaker.value().size()});
  return ops::add_row(hidden, nn::as_vector(nn::linear(g, store, "speaker_proj", row)));
}

#define SPKADAPT_INSTANTIATE(T)                                                                                  \
  template void declare_backbone(ParameterStore<T>&, const ModelConfig&, Rng&);                                 \
  template void declare_fft_block(ParameterStore<T>&, const std::string&, const ModelConfig&, Rng&);            \
  template Var<T> embed_phonemes(Graph<T>&, const ParameterStore<T>&, const ModelConfig&,                       \
                                 std::span<const std::int32_t>);                                                \
  template Var<T> fft_block(Graph<T>&, const ParameterStore<T>&, const std::string&, const ModelConfig&,        \
                            const Var<T>&, const Mask<T>&, const AdapterVars<T>*);                              \
  template Var<T> encode(Graph<T>&, const ParameterStore<T>&, const ModelConfig&, std::span<const std::int32_t>, \
                         const Mask<T>&, const AdapterHooks<T>*);                                               \
  template Var<T> decode(Graph<T>&, const ParameterStore<T>&, const ModelConfig&, const Var<T>&, const Mask<T>&, \
                         const AdapterHooks<T>*);                                                               \
  template Var<T> postnet(Graph<T>&, const ParameterStore<T>&, const ModelConfig&, const Var<T>&);              \
  template Var<T> add_speaker(Graph<T>&, const ParameterStore<T>&, const Var<T>&, const Var<T>&);

SPKADAPT_INSTANTIATE(float)
SPKADAPT_INSTANTIATE(double)
#undef SPKADAPT_INSTANTIATE

}  // namespace spkadapt
