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

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "spkadapt/graph.hpp"

namespace spkadapt {

enum class SiteModule { kEncoder, kVariance, kDecoder };

char module_tag(SiteModule module) noexcept;  // 'e', 'v', 'd'
SiteModule module_from_tag(char tag);

/// One adapter insertion point: after the convolutional sub-stack of an
/// encoder/decoder FFT block, or after a pitch (0) / energy (1) predictor.
struct SiteId {
  SiteModule module = SiteModule::kEncoder;
  std::size_t layer = 0;

  auto operator<=>(const SiteId&) const = default;
  std::string name() const;  // "e0", "v1", "d5"
};

/// Bottleneck adapter weights as graph values: W_d [d_h, d_r], b_d [d_r],
/// W_u [d_r, d_h], b_u [d_h].
template <typename T>
struct AdapterVars {
  Var<T> w_down, b_down, w_up, b_up;
};

template <typename T>
using AdapterHooks = std::map<SiteId, AdapterVars<T>>;

/// h + ReLU(h W_d + b_d) W_u + b_u, row-wise over h [n, d_h].
template <typename T>
Var<T> adapter_forward(const Var<T>& h, const AdapterVars<T>& w);

/// Looks up the hook for `site`, or nullptr.
template <typename T>
const AdapterVars<T>* find_hook(const AdapterHooks<T>* hooks, SiteId site) {
  if (hooks == nullptr) return nullptr;
  auto it = hooks->find(site);
  return it == hooks->end() ? nullptr : &it->second;
}

}  // namespace spkadapt
