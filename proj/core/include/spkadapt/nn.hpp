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

#include <cmath>
#include <string>

#include "spkadapt/graph.hpp"
#include "spkadapt/ops.hpp"
#include "spkadapt/parameters.hpp"
#include "spkadapt/rng.hpp"

// Parameter declaration and lookup helpers shared by the model modules.
// Layers are plain functions over a ParameterStore; names follow
// "<prefix>.w" / "<prefix>.b" (and ".gamma" / ".beta" for layer norm).
namespace spkadapt::nn {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double limit, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

/// Xavier-uniform weight [in, out] and zero bias [out].
template <typename T>
void declare_linear(ParameterStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                    bool bias = true) {
  store.add(prefix + ".w", uniform_tensor<T>({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng));
  if (bias) store.add(prefix + ".b", Tensor<T>({out}));
}

/// Convolution weight [kernel * in, out] (tap-major) and zero bias.
template <typename T>
void declare_conv(ParameterStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out,
                  std::size_t kernel, Rng& rng) {
  const double fan = static_cast<double>(kernel * in + out);
  store.add(prefix + ".w", uniform_tensor<T>({kernel * in, out}, std::sqrt(6.0 / fan), rng));
  store.add(prefix + ".b", Tensor<T>({out}));
}

template <typename T>
void declare_layer_norm(ParameterStore<T>& store, const std::string& prefix, std::size_t dim) {
  store.add(prefix + ".gamma", Tensor<T>({dim}, T(1)));
  store.add(prefix + ".beta", Tensor<T>({dim}));
}

template <typename T>
Var<T> param(Graph<T>& g, const ParameterStore<T>& store, const std::string& name) {
  return g.param(store.at(name));
}

template <typename T>
Var<T> linear(Graph<T>& g, const ParameterStore<T>& store, const std::string& prefix, const Var<T>& x) {
  return ops::linear(x, param(g, store, prefix + ".w"), param(g, store, prefix + ".b"));
}

template <typename T>
Var<T> conv(Graph<T>& g, const ParameterStore<T>& store, const std::string& prefix, const Var<T>& x,
            std::size_t kernel) {
  return ops::conv1d_same(x, param(g, store, prefix + ".w"), param(g, store, prefix + ".b"), kernel);
}

template <typename T>
Var<T> layer_norm(Graph<T>& g, const ParameterStore<T>& store, const std::string& prefix, const Var<T>& x) {
  return ops::layer_norm_rows(x, param(g, store, prefix + ".gamma"), param(g, store, prefix + ".beta"));
}

/// [1, d] or [d] view as a broadcastable row vector [d].
template <typename T>
Var<T> as_vector(const Var<T>& x) {
  return ops::reshape(x, Shape{x.value().size()});
}

}  // namespace spkadapt::nn
