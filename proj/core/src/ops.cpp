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

#include "spkadapt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace spkadapt::ops {
namespace {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
MatMap<T> as_matrix(Tensor<T>& t) {
  return MatMap<T>(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void dim_error(const char* op, const std::string& detail) {
  throw DimensionError(std::string(op) + ": " + detail);
}

template <typename T>
void require_rank2(const char* op, const char* arg, const Tensor<T>& t) {
  if (t.rank() != 2) dim_error(op, std::string(arg) + " must be rank 2, got " + shape_string(t.shape()));
}

template <typename T>
void require_same_graph(const char* op, const Var<T>& a, const Var<T>& b) {
  if (&a.graph() != &b.graph()) throw StateError(std::string(op) + ": operands belong to different graphs");
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_same_graph("matmul", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank2("matmul", "lhs", av);
  require_rank2("matmul", "rhs", bv);
  if (av.cols() != bv.rows()) {
    dim_error("matmul", "lhs axis 1 (" + std::to_string(av.cols()) + ") != rhs axis 0 (" +
                            std::to_string(bv.rows()) + ")");
  }
  Tensor<T> out({av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("matmul", std::move(out), {ia, ib}, [ia, ib](Graph<T>& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    if (g.requires_grad(ia)) as_matrix(g.grad_buffer(ia)).noalias() += as_matrix(up) * as_matrix(g.value(ib)).transpose();
    if (g.requires_grad(ib)) as_matrix(g.grad_buffer(ib)).noalias() += as_matrix(g.value(ia)).transpose() * as_matrix(up);
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  const auto& av = a.value();
  require_rank2("transpose", "input", av);
  Tensor<T> out({av.cols(), av.rows()});
  as_matrix(out) = as_matrix(av).transpose();
  const auto ia = a.id();
  return a.graph().record("transpose", std::move(out), {ia}, [ia](Graph<T>& g, std::uint32_t self) {
    as_matrix(g.grad_buffer(ia)) += as_matrix(g.upstream(self)).transpose();
  });
}

namespace {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) dim_error(op, "shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_graph("add", a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("add", std::move(out), {ia, ib}, [ia, ib](Graph<T>& g, std::uint32_t self) {
    if (g.requires_grad(ia)) accumulate(g.grad_buffer(ia), g.upstream(self));
    if (g.requires_grad(ib)) accumulate(g.grad_buffer(ib), g.upstream(self));
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_graph("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("sub", std::move(out), {ia, ib}, [ia, ib](Graph<T>& g, std::uint32_t self) {
    const auto up = g.upstream(self).data();
    if (g.requires_grad(ia)) accumulate(g.grad_buffer(ia), g.upstream(self));
    if (g.requires_grad(ib)) {
      auto d = g.grad_buffer(ib).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= up[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_graph("mul", a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("mul", std::move(out), {ia, ib}, [ia, ib](Graph<T>& g, std::uint32_t self) {
    const auto up = g.upstream(self).data();
    if (g.requires_grad(ia)) {
      auto d = g.grad_buffer(ia).data();
      auto other = g.value(ib).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i] * other[i];
    }
    if (g.requires_grad(ib)) {
      auto d = g.grad_buffer(ib).data();
      auto other = g.value(ia).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i] * other[i];
    }
  });
}

template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& b) {
  require_same_graph("add_row", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (bv.size() != av.cols()) {
    dim_error("add_row", "bias length " + std::to_string(bv.size()) + " != input axis 1 (" +
                             std::to_string(av.cols()) + ")");
  }
  Tensor<T> out = av;
  const std::size_t n = av.rows(), d = av.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bv[c];
  }
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("add_row", std::move(out), {ia, ib}, [ia, ib, n, d](Graph<T>& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    if (g.requires_grad(ia)) accumulate(g.grad_buffer(ia), up);
    if (g.requires_grad(ib)) {
      auto& gb = g.grad_buffer(ib);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) gb[c] += up[r * d + c];
      }
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& x : out.data()) x *= factor;
  const auto ia = a.id();
  return a.graph().record("scale", std::move(out), {ia}, [ia, factor](Graph<T>& g, std::uint32_t self) {
    auto d = g.grad_buffer(ia).data();
    const auto up = g.upstream(self).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * up[i];
  });
}

template <typename T>
Var<T> scale_rows(const Var<T>& a, std::span<const T> weights) {
  const auto& av = a.value();
  if (weights.size() != av.rows()) {
    dim_error("scale_rows", "weights length " + std::to_string(weights.size()) + " != input axis 0 (" +
                                std::to_string(av.rows()) + ")");
  }
  Tensor<T> out = av;
  const std::size_t d = av.cols();
  std::vector<T> w(weights.begin(), weights.end());
  for (std::size_t r = 0; r < w.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] *= w[r];
  }
  const auto ia = a.id();
  return a.graph().record("scale_rows", std::move(out), {ia}, [ia, w = std::move(w), d](Graph<T>& g, std::uint32_t self) {
    auto& ga = g.grad_buffer(ia);
    const auto& up = g.upstream(self);
    for (std::size_t r = 0; r < w.size(); ++r) {
      for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += w[r] * up[r * d + c];
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.data()) x = x > T(0) ? x : T(0);
  const auto ia = a.id();
  return a.graph().record("relu", std::move(out), {ia}, [ia](Graph<T>& g, std::uint32_t self) {
    auto d = g.grad_buffer(ia).data();
    const auto up = g.upstream(self).data();
    const auto x = g.value(ia).data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (x[i] > T(0)) d[i] += up[i];
    }
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.data()) x = std::tanh(x);
  const auto ia = a.id();
  return a.graph().record("tanh", std::move(out), {ia}, [ia](Graph<T>& g, std::uint32_t self) {
    auto d = g.grad_buffer(ia).data();
    const auto up = g.upstream(self).data();
    const auto y = g.value(self).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
  const auto& av = a.value();
  require_rank2("softmax_rows", "input", av);
  Tensor<T> out = av;
  const std::size_t n = av.rows(), d = av.cols();
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = 0;
    for (auto& x : row) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (auto& x : row) x /= sum;
  }
  const auto ia = a.id();
  return a.graph().record("softmax_rows", std::move(out), {ia}, [ia, n, d](Graph<T>& g, std::uint32_t self) {
    auto& ga = g.grad_buffer(ia);
    const auto& up = g.upstream(self);
    const auto& y = g.value(self);
    for (std::size_t r = 0; r < n; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += up[r * d + c] * y[r * d + c];
      for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += y[r * d + c] * (up[r * d + c] - dot);
    }
  });
}

template <typename T>
Var<T> log_softmax_rows(const Var<T>& a) {
  const auto& av = a.value();
  require_rank2("log_softmax_rows", "input", av);
  Tensor<T> out = av;
  const std::size_t n = av.rows(), d = av.cols();
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = 0;
    for (auto x : row) sum += std::exp(x - mx);
    const T lse = mx + std::log(sum);
    for (auto& x : row) x -= lse;
  }
  const auto ia = a.id();
  return a.graph().record("log_softmax_rows", std::move(out), {ia}, [ia, n, d](Graph<T>& g, std::uint32_t self) {
    auto& ga = g.grad_buffer(ia);
    const auto& up = g.upstream(self);
    const auto& y = g.value(self);
    for (std::size_t r = 0; r < n; ++r) {
      T total = 0;
      for (std::size_t c = 0; c < d; ++c) total += up[r * d + c];
      for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += up[r * d + c] - std::exp(y[r * d + c]) * total;
    }
  });
}

template <typename T>
Var<T> layer_norm_rows(const Var<T>& a, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require_same_graph("layer_norm_rows", a, gamma);
  require_same_graph("layer_norm_rows", a, beta);
  const auto& av = a.value();
  require_rank2("layer_norm_rows", "input", av);
  const std::size_t n = av.rows(), d = av.cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    dim_error("layer_norm_rows", "gain/bias length must equal input axis 1 (" + std::to_string(d) + ")");
  }
  Tensor<T> normalized({n, d});
  std::vector<T> inv_std(n);
  Tensor<T> out({n, d});
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r) {
    T mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += av[r * d + c];
    mean /= T(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const T z = av[r * d + c] - mean;
      var += z * z;
    }
    var /= T(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const T xh = (av[r * d + c] - mean) * inv_std[r];
      normalized[r * d + c] = xh;
      out[r * d + c] = xh * gv[c] + bv[c];
    }
  }
  const auto ia = a.id(), ig = gamma.id(), ib = beta.id();
  return a.graph().record(
      "layer_norm_rows", std::move(out), {ia, ig, ib},
      [ia, ig, ib, n, d, xhat = std::move(normalized), inv_std = std::move(inv_std)](Graph<T>& g, std::uint32_t self) {
        const auto& up = g.upstream(self);
        const auto& gv = g.value(ig);
        if (g.requires_grad(ig)) {
          auto& gg = g.grad_buffer(ig);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) gg[c] += up[r * d + c] * xhat[r * d + c];
        }
        if (g.requires_grad(ib)) {
          auto& gb = g.grad_buffer(ib);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) gb[c] += up[r * d + c];
        }
        if (g.requires_grad(ia)) {
          auto& ga = g.grad_buffer(ia);
          for (std::size_t r = 0; r < n; ++r) {
            T sum_dy = 0, sum_dy_xh = 0;
            for (std::size_t c = 0; c < d; ++c) {
              const T dy = up[r * d + c] * gv[c];
              sum_dy += dy;
              sum_dy_xh += dy * xhat[r * d + c];
            }
            for (std::size_t c = 0; c < d; ++c) {
              const T dy = up[r * d + c] * gv[c];
              ga[r * d + c] += inv_std[r] * (dy - sum_dy / T(d) - xhat[r * d + c] * sum_dy_xh / T(d));
            }
          }
        }
      });
}

template <typename T>
Var<T> dropout(const Var<T>& a, double p) {
  if (p < 0.0 || p >= 1.0) throw InputError("dropout: probability must be in [0, 1)");
  Graph<T>& g = a.graph();
  if (!g.training() || p == 0.0) return a;
  const T keep_scale = T(1.0 / (1.0 - p));
  Tensor<T> mask(a.value().shape());
  for (auto& m : mask.data()) m = g.rng().uniform() < p ? T(0) : keep_scale;
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const auto ia = a.id();
  return g.record("dropout", std::move(out), {ia}, [ia, mask = std::move(mask)](Graph<T>& gr, std::uint32_t self) {
    auto d = gr.grad_buffer(ia).data();
    const auto up = gr.upstream(self).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i] * mask[i];
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> index) {
  const auto& tv = table.value();
  require_rank2("gather_rows", "table", tv);
  const std::size_t d = tv.cols();
  Tensor<T> out({index.size(), d});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= tv.rows()) {
      throw InputError("gather_rows: index " + std::to_string(index[i]) + " out of range for axis 0 of extent " +
                       std::to_string(tv.rows()));
    }
    std::copy_n(tv.row(index[i]).begin(), d, out.row(i).begin());
  }
  const auto it = table.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return table.graph().record("gather_rows", std::move(out), {it}, [it, d, idx = std::move(idx)](Graph<T>& g, std::uint32_t self) {
    auto& gt = g.grad_buffer(it);
    const auto& up = g.upstream(self);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) gt[idx[i] * d + c] += up[i * d + c];
    }
  });
}

template <typename T>
Var<T> gather_cells(const Var<T>& a, std::span<const std::pair<std::size_t, std::size_t>> cells) {
  const auto& av = a.value();
  require_rank2("gather_cells", "input", av);
  Tensor<T> out({cells.size()});
  std::vector<std::size_t> flat(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (cells[k].first >= av.rows() || cells[k].second >= av.cols()) {
      throw InputError("gather_cells: cell out of range for shape " + shape_string(av.shape()));
    }
    flat[k] = cells[k].first * av.cols() + cells[k].second;
    out[k] = av[flat[k]];
  }
  const auto ia = a.id();
  return a.graph().record("gather_cells", std::move(out), {ia}, [ia, flat = std::move(flat)](Graph<T>& g, std::uint32_t self) {
    auto& ga = g.grad_buffer(ia);
    const auto& up = g.upstream(self);
    for (std::size_t k = 0; k < flat.size(); ++k) ga[flat[k]] += up[k];
  });
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t kernel, std::size_t pad_left,
              std::size_t pad_right) {
  require_same_graph("conv1d", x, weight);
  require_same_graph("conv1d", x, bias);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  require_rank2("conv1d", "input", xv);
  require_rank2("conv1d", "weight", wv);
  const std::size_t n = xv.rows(), c_in = xv.cols(), c_out = wv.cols();
  if (kernel == 0) dim_error("conv1d", "kernel must be positive");
  if (wv.rows() != kernel * c_in) {
    dim_error("conv1d", "weight axis 0 (" + std::to_string(wv.rows()) + ") != kernel * input channels (" +
                            std::to_string(kernel * c_in) + ")");
  }
  if (bias.value().size() != c_out) {
    dim_error("conv1d", "bias length " + std::to_string(bias.value().size()) + " != weight axis 1 (" +
                            std::to_string(c_out) + ")");
  }
  if (n + pad_left + pad_right < kernel) dim_error("conv1d", "input shorter than kernel after padding");
  const std::size_t n_out = n + pad_left + pad_right - kernel + 1;
  const std::size_t width = kernel * c_in;
  Tensor<T> cols({n_out, width});
  for (std::size_t t = 0; t < n_out; ++t) {
    for (std::size_t j = 0; j < kernel; ++j) {
      const auto src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad_left);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      std::copy_n(xv.row(static_cast<std::size_t>(src)).begin(), c_in, cols.data().begin() + t * width + j * c_in);
    }
  }
  Tensor<T> out({n_out, c_out});
  as_matrix(out).noalias() = as_matrix(cols) * as_matrix(wv);
  const auto& bv = bias.value();
  for (std::size_t t = 0; t < n_out; ++t)
    for (std::size_t c = 0; c < c_out; ++c) out[t * c_out + c] += bv[c];

  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.graph().record(
      "conv1d", std::move(out), {ix, iw, ib},
      [ix, iw, ib, n, c_in, c_out, n_out, kernel, pad_left, width, cols = std::move(cols)](Graph<T>& g, std::uint32_t self) {
        const auto& up = g.upstream(self);
        if (g.requires_grad(iw)) as_matrix(g.grad_buffer(iw)).noalias() += as_matrix(cols).transpose() * as_matrix(up);
        if (g.requires_grad(ib)) {
          auto& gb = g.grad_buffer(ib);
          for (std::size_t t = 0; t < n_out; ++t)
            for (std::size_t c = 0; c < c_out; ++c) gb[c] += up[t * c_out + c];
        }
        if (g.requires_grad(ix)) {
          Tensor<T> dcols({n_out, width});
          as_matrix(dcols).noalias() = as_matrix(up) * as_matrix(g.value(iw)).transpose();
          auto& gx = g.grad_buffer(ix);
          for (std::size_t t = 0; t < n_out; ++t) {
            for (std::size_t j = 0; j < kernel; ++j) {
              const auto src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad_left);
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
              for (std::size_t c = 0; c < c_in; ++c) gx[static_cast<std::size_t>(src) * c_in + c] += dcols[t * width + j * c_in + c];
            }
          }
        }
      });
}

template <typename T>
Var<T> conv1d_same(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t kernel) {
  const std::size_t left = (kernel - 1) / 2;
  return conv1d(x, weight, bias, kernel, left, kernel - 1 - left);
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T s = 0;
  for (auto x : a.value().data()) s += x;
  const auto ia = a.id();
  return a.graph().record("sum_all", Tensor<T>::scalar(s), {ia}, [ia](Graph<T>& g, std::uint32_t self) {
    const T up = g.upstream(self)[0];
    for (auto& d : g.grad_buffer(ia).data()) d += up;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  const std::size_t count = a.value().size();
  if (count == 0) throw InputError("mean_all: empty input");
  T s = 0;
  for (auto x : a.value().data()) s += x;
  const auto ia = a.id();
  return a.graph().record("mean_all", Tensor<T>::scalar(s / T(count)), {ia}, [ia, count](Graph<T>& g, std::uint32_t self) {
    const T up = g.upstream(self)[0] / T(count);
    for (auto& d : g.grad_buffer(ia).data()) d += up;
  });
}

template <typename T>
Var<T> mean_rows(const Var<T>& a) {
  const auto& av = a.value();
  require_rank2("mean_rows", "input", av);
  const std::size_t n = av.rows(), d = av.cols();
  if (n == 0) throw InputError("mean_rows: empty input");
  Tensor<T> out({1, d});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[c] += av[r * d + c];
  for (auto& x : out.data()) x /= T(n);
  const auto ia = a.id();
  return a.graph().record("mean_rows", std::move(out), {ia}, [ia, n, d](Graph<T>& g, std::uint32_t self) {
    auto& ga = g.grad_buffer(ia);
    const auto& up = g.upstream(self);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += up[c] / T(n);
  });
}

template <typename T>
Var<T> mse_loss(const Var<T>& prediction, const Var<T>& target) {
  require_same_graph("mse_loss", prediction, target);
  require_same_shape("mse_loss", prediction.value(), target.value());
  const auto p = prediction.value().data();
  const auto t = target.value().data();
  if (p.empty()) throw InputError("mse_loss: empty input");
  T s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  const std::size_t count = p.size();
  const auto ip = prediction.id(), it = target.id();
  return prediction.graph().record("mse_loss", Tensor<T>::scalar(s / T(count)), {ip, it},
                                   [ip, it, count](Graph<T>& g, std::uint32_t self) {
                                     const T k = T(2) * g.upstream(self)[0] / T(count);
                                     const auto p = g.value(ip).data();
                                     const auto t = g.value(it).data();
                                     if (g.requires_grad(ip)) {
                                       auto d = g.grad_buffer(ip).data();
                                       for (std::size_t i = 0; i < count; ++i) d[i] += k * (p[i] - t[i]);
                                     }
                                     if (g.requires_grad(it)) {
                                       auto d = g.grad_buffer(it).data();
                                       for (std::size_t i = 0; i < count; ++i) d[i] -= k * (p[i] - t[i]);
                                     }
                                   });
}

template <typename T>
Var<T> l1_loss(const Var<T>& prediction, const Var<T>& target) {
  require_same_graph("l1_loss", prediction, target);
  require_same_shape("l1_loss", prediction.value(), target.value());
  const auto p = prediction.value().data();
  const auto t = target.value().data();
  if (p.empty()) throw InputError("l1_loss: empty input");
  T s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - t[i]);
  const std::size_t count = p.size();
  const auto ip = prediction.id(), it = target.id();
  return prediction.graph().record("l1_loss", Tensor<T>::scalar(s / T(count)), {ip, it},
                                   [ip, it, count](Graph<T>& g, std::uint32_t self) {
                                     const T k = g.upstream(self)[0] / T(count);
                                     const auto p = g.value(ip).data();
                                     const auto t = g.value(it).data();
                                     auto sign = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
                                     if (g.requires_grad(ip)) {
                                       auto d = g.grad_buffer(ip).data();
                                       for (std::size_t i = 0; i < count; ++i) d[i] += k * sign(p[i] - t[i]);
                                     }
                                     if (g.requires_grad(it)) {
                                       auto d = g.grad_buffer(it).data();
                                       for (std::size_t i = 0; i < count; ++i) d[i] -= k * sign(p[i] - t[i]);
                                     }
                                   });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t count) {
  const auto& av = a.value();
  require_rank2("slice_cols", "input", av);
  if (start + count > av.cols()) {
    dim_error("slice_cols", "range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                ") exceeds axis 1 extent " + std::to_string(av.cols()));
  }
  const std::size_t n = av.rows(), d = av.cols();
  Tensor<T> out({n, count});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(av.data().begin() + r * d + start, count, out.row(r).begin());
  const auto ia = a.id();
  return a.graph().record("slice_cols", std::move(out), {ia}, [ia, n, d, start, count](Graph<T>& g, std::uint32_t self) {
    auto& ga = g.grad_buffer(ia);
    const auto& up = g.upstream(self);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < count; ++c) ga[r * d + start + c] += up[r * count + c];
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw InputError("concat_cols: no inputs");
  Graph<T>& g = parts.front().graph();
  const std::size_t n = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_same_graph("concat_cols", parts.front(), p);
    require_rank2("concat_cols", "part", p.value());
    if (p.value().rows() != n) {
      dim_error("concat_cols", "axis 0 mismatch (" + std::to_string(p.value().rows()) + " vs " + std::to_string(n) + ")");
    }
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor<T> out({n, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t r = 0; r < n; ++r) std::copy_n(pv.row(r).begin(), widths[k], out.data().begin() + r * total + offset);
    offset += widths[k];
  }
  auto inputs = ids;
  return g.record("concat_cols", std::move(out), std::move(inputs),
                  [ids = std::move(ids), widths = std::move(widths), n, total](Graph<T>& gr, std::uint32_t self) {
                    const auto& up = gr.upstream(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (gr.requires_grad(ids[k])) {
                        auto& gk = gr.grad_buffer(ids[k]);
                        for (std::size_t r = 0; r < n; ++r)
                          for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += up[r * total + offset + c];
                      }
                      offset += widths[k];
                    }
                  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  if (shape_size(shape) != a.value().size()) {
    dim_error("reshape", "cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return a.graph().record("reshape", std::move(out), {ia}, [ia](Graph<T>& g, std::uint32_t self) {
    auto d = g.grad_buffer(ia).data();
    const auto up = g.upstream(self).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += up[i];
  });
}

template <typename T>
Var<T> slice_flat(const Var<T>& a, std::size_t offset, Shape shape) {
  const std::size_t count = shape_size(shape);
  if (offset + count > a.value().size()) {
    dim_error("slice_flat", "range [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                                ") exceeds " + std::to_string(a.value().size()) + " elements");
  }
  const auto src = a.value().data();
  Tensor<T> out(std::move(shape), std::vector<T>(src.begin() + offset, src.begin() + offset + count));
  const auto ia = a.id();
  return a.graph().record("slice_flat", std::move(out), {ia}, [ia, offset, count](Graph<T>& g, std::uint32_t self) {
    auto d = g.grad_buffer(ia).data();
    const auto up = g.upstream(self).data();
    for (std::size_t i = 0; i < count; ++i) d[offset + i] += up[i];
  });
}

template <typename T>
Var<T> neg_sq_dist(const Var<T>& a, const Var<T>& b) {
  require_same_graph("neg_sq_dist", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank2("neg_sq_dist", "lhs", av);
  require_rank2("neg_sq_dist", "rhs", bv);
  if (av.cols() != bv.cols()) {
    dim_error("neg_sq_dist", "feature axis 1 mismatch (" + std::to_string(av.cols()) + " vs " +
                                 std::to_string(bv.cols()) + ")");
  }
  const std::size_t n = av.rows(), m = bv.rows(), d = av.cols();
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      T s = 0;
      for (std::size_t c = 0; c < d; ++c) {
        const T z = av[i * d + c] - bv[j * d + c];
        s += z * z;
      }
      out[i * m + j] = -s;
    }
  }
  const auto ia = a.id(), ib = b.id();
  return a.graph().record("neg_sq_dist", std::move(out), {ia, ib}, [ia, ib, n, m, d](Graph<T>& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    const auto& av = g.value(ia);
    const auto& bv = g.value(ib);
    const bool ga_on = g.requires_grad(ia), gb_on = g.requires_grad(ib);
    Tensor<T>* ga = ga_on ? &g.grad_buffer(ia) : nullptr;
    Tensor<T>* gb = gb_on ? &g.grad_buffer(ib) : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const T u = up[i * m + j];
        if (u == T(0)) continue;
        for (std::size_t c = 0; c < d; ++c) {
          const T z = T(2) * (av[i * d + c] - bv[j * d + c]) * u;
          if (ga) (*ga)[i * d + c] -= z;
          if (gb) (*gb)[j * d + c] += z;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> sinusoid_table(std::size_t length, std::size_t dim) {
  Tensor<T> table({length, dim});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * rate;
      table[pos * dim + c] = static_cast<T>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return table;
}

#define SPKADAPT_INSTANTIATE_OPS(T)                                                                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> transpose(const Var<T>&);                                                                \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> add_row(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> scale(const Var<T>&, T);                                                                 \
  template Var<T> scale_rows(const Var<T>&, std::span<const T>);                                           \
  template Var<T> relu(const Var<T>&);                                                                     \
  template Var<T> tanh(const Var<T>&);                                                                     \
  template Var<T> softmax_rows(const Var<T>&);                                                             \
  template Var<T> log_softmax_rows(const Var<T>&);                                                         \
  template Var<T> layer_norm_rows(const Var<T>&, const Var<T>&, const Var<T>&, T);                         \
  template Var<T> dropout(const Var<T>&, double);                                                          \
  template Var<T> gather_rows(const Var<T>&, std::span<const std::size_t>);                                \
  template Var<T> gather_cells(const Var<T>&, std::span<const std::pair<std::size_t, std::size_t>>);       \
  template Var<T> conv1d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t, std::size_t); \
  template Var<T> conv1d_same(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t);                   \
  template Var<T> sum_all(const Var<T>&);                                                                  \
  template Var<T> mean_all(const Var<T>&);                                                                 \
  template Var<T> mean_rows(const Var<T>&);                                                                \
  template Var<T> mse_loss(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> l1_loss(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> slice_cols(const Var<T>&, std::size_t, std::size_t);                                     \
  template Var<T> concat_cols(std::span<const Var<T>>);                                                    \
  template Var<T> reshape(const Var<T>&, Shape);                                                           \
  template Var<T> slice_flat(const Var<T>&, std::size_t, Shape);                                           \
  template Var<T> neg_sq_dist(const Var<T>&, const Var<T>&);                                               \
  template Tensor<T> sinusoid_table(std::size_t, std::size_t);

SPKADAPT_INSTANTIATE_OPS(float)
SPKADAPT_INSTANTIATE_OPS(double)

}  // namespace spkadapt::ops
