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

#include "spkadapt/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spkadapt/nn.hpp"
#include "spkadapt/ops.hpp"

namespace spkadapt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

template <typename T>
void check_grid(const Tensor<T>& lp, const char* op) {
  if (lp.rank() != 2 || lp.rows() == 0 || lp.cols() == 0) {
    throw InputError(std::string(op) + ": expected a non-empty [n, m] map, got " + shape_string(lp.shape()));
  }
  if (lp.cols() < lp.rows()) {
    throw InfeasibleAlignmentError(std::string(op) + ": " + std::to_string(lp.cols()) + " frames cannot cover " +
                                   std::to_string(lp.rows()) + " phonemes");
  }
}

}  // namespace

template <typename T>
void declare_alignment(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng) {
  nn::declare_conv(store, "align.text.conv0", cfg.d_h, cfg.align_dim, cfg.align_kernel, rng);
  nn::declare_conv(store, "align.text.conv1", cfg.align_dim, cfg.align_dim, 1, rng);
  nn::declare_conv(store, "align.mel.conv0", cfg.n_mels, cfg.align_dim, cfg.align_kernel, rng);
  nn::declare_conv(store, "align.mel.conv1", cfg.align_dim, cfg.align_dim, 1, rng);
}

template <typename T>
Tensor<T> diagonal_log_prior(std::size_t n, std::size_t m, double width, double strength) {
  Tensor<T> p({m, n});
  if (strength == 0) return p;
  const double sigma = std::max(1.0, width * static_cast<double>(n) / static_cast<double>(m)) ;
  for (std::size_t t = 0; t < m; ++t) {
    const double center = (static_cast<double>(t) + 0.5) * static_cast<double>(n) / static_cast<double>(m) - 0.5;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (static_cast<double>(i) - center) / sigma;
      p(t, i) = static_cast<T>(-0.5 * z * z * strength);
    }
  }
  return p;
}

template <typename T>
AlignmentMap<T> align_features(const Var<T>& text, const Var<T>& mel, double temperature, const Tensor<T>* log_prior,
                               double prior_strength) {
  if (text.rows() == 0 || mel.rows() == 0 || text.value().empty() || mel.value().empty()) {
    throw InputError("soft_align: empty text or mel features");
  }
  Var<T> logits = ops::scale(ops::neg_sq_dist(mel, text), static_cast<T>(temperature));
  if (log_prior != nullptr && prior_strength != 0) logits = ops::add(logits, mel.graph().constant(*log_prior));
  AlignmentMap<T> map;
  map.log_probs = ops::transpose(ops::log_softmax_rows(logits));
  map.prior_strength = prior_strength;
  return map;
}

template <typename T>
AlignmentMap<T> soft_align(Graph<T>& g, const ParameterStore<T>& store, const ModelConfig& cfg,
                           std::span<const std::int32_t> phonemes, const Var<T>& mel, double prior_strength) {
  if (phonemes.empty() || mel.rows() == 0) throw InputError("soft_align: n = 0 or m = 0");
  std::vector<std::size_t> idx;
  for (auto p : phonemes) {
    if (p < 0 || static_cast<std::size_t>(p) >= cfg.vocab_size) throw InputError("soft_align: phoneme id out of range");
    idx.push_back(static_cast<std::size_t>(p));
  }
  Var<T> text = ops::gather_rows(nn::param(g, store, "embedding"), std::span<const std::size_t>(idx));
  text = ops::relu(nn::conv(g, store, "align.text.conv0", text, cfg.align_kernel));
  text = nn::conv(g, store, "align.text.conv1", text, 1);
  Var<T> frames = ops::relu(nn::conv(g, store, "align.mel.conv0", mel, cfg.align_kernel));
  frames = nn::conv(g, store, "align.mel.conv1", frames, 1);
  Tensor<T> prior;
  if (prior_strength != 0) prior = diagonal_log_prior<T>(phonemes.size(), mel.rows(), cfg.prior_width, prior_strength);
  return align_features(text, frames, cfg.align_temperature, prior_strength != 0 ? &prior : nullptr, prior_strength);
}

template <typename T>
Var<T> forward_sum_loss(const Var<T>& log_probs) {
  const Tensor<T>& lp = log_probs.value();
  check_grid(lp, "forward_sum_loss");
  const std::size_t n = lp.rows(), m = lp.cols();
  // alpha(i, t): log mass of partial paths ending at phoneme i on frame t.
  std::vector<double> alpha(n * m, kNegInf), beta(n * m, kNegInf);
  alpha[0] = lp(0, 0);
  for (std::size_t t = 1; t < m; ++t) {
    for (std::size_t i = 0; i < n && i <= t; ++i) {
      double a = alpha[i * m + t - 1];
      if (i > 0) a = log_add(a, alpha[(i - 1) * m + t - 1]);
      alpha[i * m + t] = a == kNegInf ? kNegInf : a + lp(i, t);
    }
  }
  const double log_z = alpha[(n - 1) * m + m - 1];
  if (!std::isfinite(log_z)) throw NumericalError("forward_sum_loss: total path probability is zero or non-finite");
  // beta(i, t): log mass of completions from (i, t), excluding lp(i, t).
  beta[(n - 1) * m + m - 1] = 0;
  for (std::size_t t = m - 1; t-- > 0;) {
    for (std::size_t i = 0; i < n; ++i) {
      double b = beta[i * m + t + 1] == kNegInf ? kNegInf : beta[i * m + t + 1] + lp(i, t + 1);
      if (i + 1 < n && beta[(i + 1) * m + t + 1] != kNegInf) {
        b = log_add(b, beta[(i + 1) * m + t + 1] + lp(i + 1, t + 1));
      }
      beta[i * m + t] = b;
    }
  }
  Tensor<T> posterior({n, m});
  for (std::size_t k = 0; k < n * m; ++k) {
    const double s = alpha[k] + beta[k];
    posterior.data()[k] = s == kNegInf ? T(0) : static_cast<T>(std::exp(s - log_z));
  }
  const auto id = log_probs.id();
  return log_probs.graph().record(
      "forward_sum_loss", Tensor<T>::scalar(static_cast<T>(-log_z)), {id},
      [id, posterior = std::move(posterior)](Graph<T>& g, std::uint32_t self) {
        const T up = g.upstream(self)[0];
        auto d = g.grad_buffer(id).data();
        const auto p = posterior.data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] -= up * p[k];
      });
}

template <typename T>
std::vector<std::int32_t> viterbi_path(const Tensor<T>& lp) {
  check_grid(lp, "viterbi");
  const std::size_t n = lp.rows(), m = lp.cols();
  std::vector<double> delta(n * m, kNegInf);
  delta[0] = lp(0, 0);
  for (std::size_t t = 1; t < m; ++t) {
    for (std::size_t i = 0; i < n && i <= t; ++i) {
      double best = delta[i * m + t - 1];
      if (i > 0) best = std::max(best, delta[(i - 1) * m + t - 1]);
      delta[i * m + t] = best == kNegInf ? kNegInf : best + static_cast<double>(lp(i, t));
    }
  }
  std::vector<std::int32_t> path(m);
  std::size_t i = n - 1;
  for (std::size_t t = m; t-- > 0;) {
    path[t] = static_cast<std::int32_t>(i);
    if (t == 0) break;
    // Stay unless advancing is strictly better, or staying is impossible.
    const double stay = delta[i * m + t - 1];
    if (i > 0 && (delta[(i - 1) * m + t - 1] > stay || i > t - 1)) --i;
  }
  return path;
}

std::vector<std::int32_t> path_to_durations(std::span<const std::int32_t> path, std::size_t n) {
  std::vector<std::int32_t> d(n, 0);
  for (auto p : path) {
    if (p < 0 || static_cast<std::size_t>(p) >= n) throw InputError("path_to_durations: phoneme index out of range");
    ++d[static_cast<std::size_t>(p)];
  }
  return d;
}

template <typename T>
Var<T> binarization_loss(const Var<T>& log_probs, std::span<const std::int32_t> path) {
  if (path.empty()) throw StateError("binarization_loss: hard path has not been extracted");
  if (path.size() != log_probs.cols()) throw DimensionError("binarization_loss: path length != frame count");
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  cells.reserve(path.size());
  for (std::size_t t = 0; t < path.size(); ++t) cells.emplace_back(static_cast<std::size_t>(path[t]), t);
  return ops::scale(ops::sum_all(ops::gather_cells(log_probs, std::span<const std::pair<std::size_t, std::size_t>>(cells))),
                    T(-1));
}

#define SPKADAPT_INSTANTIATE(T)                                                                                   \
  template void declare_alignment(ParameterStore<T>&, const ModelConfig&, Rng&);                                 \
  template Tensor<T> diagonal_log_prior(std::size_t, std::size_t, double, double);                               \
  template AlignmentMap<T> align_features(const Var<T>&, const Var<T>&, double, const Tensor<T>*, double);       \
  template AlignmentMap<T> soft_align(Graph<T>&, const ParameterStore<T>&, const ModelConfig&,                   \
                                      std::span<const std::int32_t>, const Var<T>&, double);                     \
  template Var<T> forward_sum_loss(const Var<T>&);                                                               \
  template std::vector<std::int32_t> viterbi_path(const Tensor<T>&);                                             \
  template Var<T> binarization_loss(const Var<T>&, std::span<const std::int32_t>);

SPKADAPT_INSTANTIATE(float)
SPKADAPT_INSTANTIATE(double)
#undef SPKADAPT_INSTANTIATE

}  // namespace spkadapt
