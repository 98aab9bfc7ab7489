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

#include <cmath>
#include <string>

#include "spkadapt/config.hpp"
#include "spkadapt/ops.hpp"
#include "spkadapt/parameters.hpp"
#include "spkadapt/rng.hpp"
#include "spkadapt/tensor.hpp"

namespace spkadapt::testing {

template <typename T = double>
inline Tensor<T> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<T>(rng.normal() * scale);
  return t;
}

inline std::size_t random_extent(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

// Reduces an arbitrary tensor to a scalar with non-uniform weights so every
// output coordinate contributes a distinct upstream gradient.
template <typename T>
Var<T> weighted_sum(const Var<T>& x) {
  Tensor<T> w(x.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(std::sin(0.7 * static_cast<double>(i) + 0.3));
  return ops::sum_all(ops::mul(x, x.graph().constant(std::move(w))));
}

// Small enough for exhaustive finite differences.
inline ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::desk();
  c.vocab_size = 7;
  c.n_mels = 5;
  c.d_h = 6;
  c.heads = 2;
  c.conv_filter = 4;
  c.conv_kernel1 = 3;
  c.speaker_dim = 4;
  c.variance_filter = 6;
  c.cwt_scales = 3;
  c.postnet_channels = 3;
  c.align_dim = 4;
  c.align_temperature = 0.5;
  return c;
}

// Replaces every tensor whose name starts with `prefix` by N(0, scale^2) draws.
template <typename T>
void randomize(ParameterStore<T>& store, Rng& rng, double scale = 0.5, const std::string& prefix = "") {
  for (auto& [name, p] : store.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    for (auto& v : p->value.storage()) v = static_cast<T>(rng.normal() * scale);
  }
}

}  // namespace spkadapt::testing
