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

#include "spkadapt/adaptation.hpp"

#include <cmath>

#include "spkadapt/nn.hpp"
#include "spkadapt/ops.hpp"

namespace spkadapt {

namespace {

std::string hyper_prefix(SiteModule m) { return std::string("hyper.") + module_tag(m); }

}  // namespace

Strategy Strategy::parse(std::string_view name) {
  Strategy s;
  if (name == "tts0") return s;
  if (name == "ft") {
    s.kind = StrategyKind::kFineTune;
    return s;
  }
  std::string_view sites;
  if (name.starts_with("adapter_")) {
    s.kind = StrategyKind::kAdapter;
    sites = name.substr(8);
  } else if (name.starts_with("hyper_")) {
    s.kind = StrategyKind::kHyper;
    sites = name.substr(6);
  } else {
    throw ConfigError("unknown strategy '" + std::string(name) + "'");
  }
  char last = 0;
  bool expect_site = true;
  for (char c : sites) {
    if (c == '/' && !expect_site) {
      expect_site = true;
      continue;
    }
    const bool ordered = (c == 'e' && last == 0) || (c == 'v' && (last == 0 || last == 'e')) ||
                         (c == 'd' && last != 'd');
    if (!ordered) throw ConfigError("strategy '" + std::string(name) + "': sites must be a subset of e, v, d in order");
    (c == 'e' ? s.encoder : c == 'v' ? s.variance : s.decoder) = true;
    last = c;
    expect_site = false;
  }
  if (last == 0 || sites.back() == '/') throw ConfigError("strategy '" + std::string(name) + "' names no sites");
  return s;
}

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::kTts0: return "tts0";
    case StrategyKind::kFineTune: return "ft";
    default: break;
  }
  std::string out = kind == StrategyKind::kAdapter ? "adapter_" : "hyper_";
  std::string sites;
  for (auto m : modules()) sites += (sites.empty() ? "" : "/") + std::string(1, module_tag(m));
  return out + sites;
}

std::vector<SiteModule> Strategy::modules() const {
  std::vector<SiteModule> out;
  if (!uses_adapters()) return out;
  if (encoder) out.push_back(SiteModule::kEncoder);
  if (variance) out.push_back(SiteModule::kVariance);
  if (decoder) out.push_back(SiteModule::kDecoder);
  return out;
}

std::size_t site_count(SiteModule module, const ModelConfig& cfg) {
  switch (module) {
    case SiteModule::kEncoder: return cfg.encoder_layers;
    case SiteModule::kVariance: return 2;
    case SiteModule::kDecoder: return cfg.decoder_layers;
  }
  return 0;
}

std::vector<SiteId> sites_of(SiteModule module, const ModelConfig& cfg) {
  std::vector<SiteId> out;
  for (std::size_t l = 0; l < site_count(module, cfg); ++l) out.push_back(SiteId{module, l});
  return out;
}

std::size_t adapter_site_params(std::size_t d_h, const AdapterDims& d) {
  return d_h * d.d_r + d.d_r + d.d_r * d_h + d_h;
}

std::size_t hypernetwork_params(std::size_t d_h, std::size_t d_1, std::size_t sites, const AdapterDims& d) {
  return (d_1 * d.d_2 + d.d_2) + sites * d.d_l + ((d.d_2 + d.d_l) * d.d_s + d.d_s) + d.d_s * (d_h * d.d_r + d.d_r) +
         d.d_s * (d.d_r * d_h + d_h);
}

std::size_t count_trainable_params(const Strategy& strategy, const ModelConfig& cfg, const AdapterDims& dims,
                                   std::size_t backbone_params) {
  switch (strategy.kind) {
    case StrategyKind::kTts0: return 0;
    case StrategyKind::kFineTune: return backbone_params;
    case StrategyKind::kAdapter: {
      std::size_t n = 0;
      for (auto m : strategy.modules()) n += site_count(m, cfg) * adapter_site_params(cfg.d_h, dims);
      return n;
    }
    case StrategyKind::kHyper: {
      std::size_t n = 0;
      for (auto m : strategy.modules()) n += hypernetwork_params(cfg.d_h, cfg.speaker_dim, site_count(m, cfg), dims);
      return n;
    }
  }
  return 0;
}

bool is_adaptation_parameter(const std::string& name) {
  return name.rfind("adapter.", 0) == 0 || name.rfind("hyper.", 0) == 0;
}

template <typename T>
void declare_strategy(ParameterStore<T>& store, const Strategy& strategy, const ModelConfig& cfg,
                      const AdapterDims& dims, Rng& rng) {
  const std::size_t d_h = cfg.d_h;
  for (auto m : strategy.modules()) {
    if (strategy.kind == StrategyKind::kAdapter) {
      for (auto site : sites_of(m, cfg)) {
        const std::string p = "adapter." + site.name();
        nn::declare_linear(store, p + ".down", d_h, dims.d_r, rng);
        store.add(p + ".up.w", Tensor<T>({dims.d_r, d_h}));
        store.add(p + ".up.b", Tensor<T>({d_h}));
      }
    } else {
      const std::string p = hyper_prefix(m);
      nn::declare_linear(store, p + ".speaker_proj", cfg.speaker_dim, dims.d_2, rng);
      store.add(p + ".layer_embedding", nn::normal_tensor<T>({site_count(m, cfg), dims.d_l}, 1.0, rng));
      nn::declare_linear(store, p + ".source_proj", dims.d_2 + dims.d_l, dims.d_s, rng);
      store.add(p + ".sampler_d.w", nn::normal_tensor<T>({dims.d_s, d_h * dims.d_r + dims.d_r}, dims.init_scale, rng));
      store.add(p + ".sampler_u.w", Tensor<T>({dims.d_s, dims.d_r * d_h + d_h}));
    }
  }
}

template <typename T>
void apply_trainability(ParameterStore<T>& store, const Strategy& strategy) {
  for (const auto& [name, p] : store.entries()) {
    const bool adaptation = is_adaptation_parameter(name);
    switch (strategy.kind) {
      case StrategyKind::kTts0: p->trainable = false; break;
      case StrategyKind::kFineTune: p->trainable = !adaptation; break;
      default: p->trainable = adaptation; break;
    }
  }
}

template <typename T>
AdapterVars<T> generate_adapter_weights(Graph<T>& g, const ParameterStore<T>& store, SiteId site,
                                        const ModelConfig& cfg, const AdapterDims& dims, const Var<T>& speaker) {
  const std::string p = hyper_prefix(site.module);
  if (site.layer >= site_count(site.module, cfg) || !store.contains(p + ".layer_embedding")) {
    throw LookupError("no hypernetwork for adapter site " + site.name());
  }
  if (speaker.value().size() != cfg.speaker_dim) {
    throw DimensionError("speaker embedding has " + std::to_string(speaker.value().size()) + " values, expected " +
                         std::to_string(cfg.speaker_dim));
  }
  const std::size_t d_h = cfg.d_h, d_r = dims.d_r;
  const Var<T> v = ops::reshape(speaker, Shape{1, cfg.speaker_dim});
  const Var<T> sp = ops::relu(nn::linear(g, store, p + ".speaker_proj", v));
  const std::size_t layer = site.layer;
  const Var<T> le = ops::gather_rows(nn::param(g, store, p + ".layer_embedding"), std::span<const std::size_t>(&layer, 1));
  const std::vector<Var<T>> parts{sp, le};
  const Var<T> z = ops::relu(nn::linear(g, store, p + ".source_proj", ops::concat_cols(std::span<const Var<T>>(parts))));
  Var<T> down = ops::matmul(z, nn::param(g, store, p + ".sampler_d.w"));
  Var<T> up = ops::matmul(z, nn::param(g, store, p + ".sampler_u.w"));
  if (dims.gain != 1.0) {
    down = ops::scale(down, static_cast<T>(dims.gain));
    up = ops::scale(up, static_cast<T>(dims.gain));
  }
  AdapterVars<T> w;
  w.w_down = ops::slice_flat(down, 0, Shape{d_h, d_r});
  w.b_down = ops::slice_flat(down, d_h * d_r, Shape{d_r});
  w.w_up = ops::slice_flat(up, 0, Shape{d_r, d_h});
  w.b_up = ops::slice_flat(up, d_r * d_h, Shape{d_h});
  return w;
}

template <typename T>
AdapterHooks<T> build_hooks(Graph<T>& g, const ParameterStore<T>& store, const Strategy& strategy,
                            const ModelConfig& cfg, const AdapterDims& dims, const Var<T>& speaker) {
  AdapterHooks<T> hooks;
  for (auto m : strategy.modules()) {
    for (auto site : sites_of(m, cfg)) {
      if (strategy.kind == StrategyKind::kHyper) {
        hooks.emplace(site, generate_adapter_weights(g, store, site, cfg, dims, speaker));
      } else {
        const std::string p = "adapter." + site.name();
        hooks.emplace(site, AdapterVars<T>{nn::param(g, store, p + ".down.w"), nn::param(g, store, p + ".down.b"),
                                           nn::param(g, store, p + ".up.w"), nn::param(g, store, p + ".up.b")});
      }
    }
  }
  return hooks;
}

#define SPKADAPT_INSTANTIATE(T)                                                                                  \
  template void declare_strategy(ParameterStore<T>&, const Strategy&, const ModelConfig&, const AdapterDims&,    \
                                 Rng&);                                                                          \
  template void apply_trainability(ParameterStore<T>&, const Strategy&);                                         \
  template AdapterVars<T> generate_adapter_weights(Graph<T>&, const ParameterStore<T>&, SiteId,                  \
                                                   const ModelConfig&, const AdapterDims&, const Var<T>&);       \
  template AdapterHooks<T> build_hooks(Graph<T>&, const ParameterStore<T>&, const Strategy&, const ModelConfig&, \
                                       const AdapterDims&, const Var<T>&);

SPKADAPT_INSTANTIATE(float)
SPKADAPT_INSTANTIATE(double)
#undef SPKADAPT_INSTANTIATE

}  // namespace spkadapt
