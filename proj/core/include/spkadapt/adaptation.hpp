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
#include <string>
#include <string_view>
#include <vector>

#include "spkadapt/adapter.hpp"
#include "spkadapt/config.hpp"
#include "spkadapt/graph.hpp"
#include "spkadapt/parameters.hpp"

namespace spkadapt {

enum class StrategyKind { kTts0, kFineTune, kAdapter, kHyper };

/// Which parameters adapt to new speakers, and where adapters sit.
struct Strategy {
  StrategyKind kind = StrategyKind::kTts0;
  bool encoder = false;
  bool variance = false;
  bool decoder = false;

  /// Accepts tts0, ft, adapter_<m>, hyper_<m> with m any of e, v, d in that
  /// order, optionally '/'-separated ("hyper_e/v/d" == "hyper_evd").
  static Strategy parse(std::string_view name);
  std::string name() const;  // canonical "adapter_e/v/d" form
  std::vector<SiteModule> modules() const;
  bool uses_adapters() const { return kind == StrategyKind::kAdapter || kind == StrategyKind::kHyper; }
};

std::size_t site_count(SiteModule module, const ModelConfig& cfg);
std::vector<SiteId> sites_of(SiteModule module, const ModelConfig& cfg);

/// d_h*d_r + d_r + d_r*d_h + d_h.
std::size_t adapter_site_params(std::size_t d_h, const AdapterDims& dims);
/// (d_1*d_2 + d_2) + sites*d_l + ((d_2+d_l)*d_s + d_s) + d_s*(d_h*d_r + d_r) + d_s*(d_r*d_h + d_h).
std::size_t hypernetwork_params(std::size_t d_h, std::size_t d_1, std::size_t sites, const AdapterDims& dims);
/// Closed-form trainable count; `backbone_params` is returned for ft.
std::size_t count_trainable_params(const Strategy& strategy, const ModelConfig& cfg, const AdapterDims& dims,
                                   std::size_t backbone_params = 0);

/// Adds adapter ("adapter.<site>.*") or hypernetwork ("hyper.<m>.*")
/// parameters for the strategy. W_u and the up-sampler start at zero, so a
/// fresh strategy is the identity on the backbone.
template <typename T>
void declare_strategy(ParameterStore<T>& store, const Strategy& strategy, const ModelConfig& cfg,
                      const AdapterDims& dims, Rng& rng);

/// Flags exactly the strategy's parameters trainable and freezes the rest.
template <typename T>
void apply_trainability(ParameterStore<T>& store, const Strategy& strategy);

bool is_adaptation_parameter(const std::string& name);

/// Generated adapter weights for one site from speaker embedding [d_1].
template <typename T>
AdapterVars<T> generate_adapter_weights(Graph<T>& g, const ParameterStore<T>& store, SiteId site,
                                        const ModelConfig& cfg, const AdapterDims& dims, const Var<T>& speaker);

/// One entry per site of every adapted module. Static strategies bind the
/// stored tensors; hyper strategies regenerate weights from `speaker`.
template <typename T>
AdapterHooks<T> build_hooks(Graph<T>& g, const ParameterStore<T>& store, const Strategy& strategy,
                            const ModelConfig& cfg, const AdapterDims& dims, const Var<T>& speaker);

}  // namespace spkadapt
