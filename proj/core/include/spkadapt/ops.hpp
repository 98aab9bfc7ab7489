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
#include <span>
#include <utility>
#include <vector>

#include "spkadapt/graph.hpp"

namespace spkadapt::ops {

// All sequence tensors are [length, channels]. Shape mismatches throw
// DimensionError naming the op and the offending axes.

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& a);

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
/// a[n, d] + b[d] broadcast over rows.
template <typename T> Var<T> add_row(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
/// Multiplies row r of `a` by the constant weights[r] (used for masking).
template <typename T> Var<T> scale_rows(const Var<T>& a, std::span<const T> weights);

template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);

template <typename T> Var<T> softmax_rows(const Var<T>& a);
template <typename T> Var<T> log_softmax_rows(const Var<T>& a);
template <typename T>
Var<T> layer_norm_rows(const Var<T>& a, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));
/// Inverted dropout; identity in eval mode or when p == 0.
template <typename T> Var<T> dropout(const Var<T>& a, double p);

/// out[i] = table[index[i]]. Serves both embedding lookup and row repetition.
template <typename T> Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> index);
/// out[k] = a(cells[k].first, cells[k].second), shape [k].
template <typename T>
Var<T> gather_cells(const Var<T>& a, std::span<const std::pair<std::size_t, std::size_t>> cells);

/// Temporal convolution. x: [n, c_in], weight: [kernel * c_in, c_out] (tap-major),
/// bias: [c_out]. Output length n + pad_left + pad_right - kernel + 1.
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t kernel,
              std::size_t pad_left, std::size_t pad_right);
/// Length-preserving convolution with symmetric zero padding.
template <typename T>
Var<T> conv1d_same(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t kernel);

template <typename T> Var<T> sum_all(const Var<T>& a);
template <typename T> Var<T> mean_all(const Var<T>& a);
/// Mean over rows: [n, d] -> [1, d].
template <typename T> Var<T> mean_rows(const Var<T>& a);

template <typename T> Var<T> mse_loss(const Var<T>& prediction, const Var<T>& target);
template <typename T> Var<T> l1_loss(const Var<T>& prediction, const Var<T>& target);

template <typename T> Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t count);
template <typename T> Var<T> concat_cols(std::span<const Var<T>> parts);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
/// Contiguous sub-range of the flat storage, viewed with `shape`.
template <typename T> Var<T> slice_flat(const Var<T>& a, std::size_t offset, Shape shape);

/// Pairwise negative squared Euclidean distance: a[n, d], b[m, d] -> [n, m].
template <typename T> Var<T> neg_sq_dist(const Var<T>& a, const Var<T>& b);

/// Sinusoidal position table [length, dim]: even columns sin, odd columns cos.
template <typename T> Tensor<T> sinusoid_table(std::size_t length, std::size_t dim);

/// Dense layer: x[n, in] * w[in, out] + b[out].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  return add_row(matmul(x, weight), bias);
}

}  // namespace spkadapt::ops
