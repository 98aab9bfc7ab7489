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

#include "spkadapt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spkadapt {
namespace {

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit == 0 || limit >= size) return idx;
  // partial Fisher-Yates
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double checked_scalar(const Var<double>& v, const std::string& where) {
  if (v.value().size() != 1) {
    throw DimensionError("grad_check: function must return a scalar, got " + shape_string(v.shape()));
  }
  const double x = v.value()[0];
  if (!std::isfinite(x)) throw NumericalError("grad_check: non-finite output at " + where);
  return x;
}

struct Accumulator {
  const GradCheckOptions& options;
  GradCheckReport report;
  double sum = 0.0;

  // central(eps) returns the numeric derivative for one step size.
  template <class Central>
  void add(double analytic, Central&& central, const std::string& where) {
    if (!std::isfinite(analytic)) throw NumericalError("grad_check: non-finite analytic gradient at " + where);
    double eps = options.eps;
    double numeric = central(eps);
    double e = relative_error(analytic, numeric, options.floor);
    for (int r = 0; r < options.kink_retries && e > options.threshold; ++r) {
      eps /= 10.0;
      const double retry = central(eps);
      const double er = relative_error(analytic, retry, options.floor);
      if (er < e) {
        e = er;
        numeric = retry;
      }
      if (e <= options.threshold) ++report.retried;
    }
    sum += e;
    ++report.checked;
    if (e > report.max_rel_error || report.worst_location.empty()) {
      report.max_rel_error = e;
      report.worst_location = where;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }

  GradCheckReport finish() {
    report.mean_rel_error = report.checked ? sum / static_cast<double>(report.checked) : 0.0;
    report.passed = report.max_rel_error <= options.threshold;
    return report;
  }
};

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LeafFn& fn, std::span<const Tensor<double>> points, const GradCheckOptions& options) {
  auto evaluate = [&](const std::vector<Tensor<double>>& at, const std::string& where) {
    Graph<double> g(options.mode, options.graph_seed);
    std::vector<Var<double>> leaves;
    for (const auto& t : at) leaves.push_back(g.leaf(t, false));
    return checked_scalar(fn(g, leaves), where);
  };

  Graph<double> g(options.mode, options.graph_seed);
  std::vector<Var<double>> leaves;
  for (const auto& t : points) leaves.push_back(g.leaf(t, true));
  Var<double> out = fn(g, leaves);
  checked_scalar(out, "analytic pass");
  g.backward(out);

  Accumulator acc{options, {}};
  Rng rng(options.seed);
  std::vector<Tensor<double>> work(points.begin(), points.end());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Tensor<double> analytic = g.grad(leaves[k]);
    for (std::size_t i : pick_coords(points[k].size(), options.max_coords_per_tensor, rng)) {
      const std::string where = "input" + std::to_string(k) + "[" + std::to_string(i) + "]";
      const double x0 = work[k][i];
      acc.add(analytic[i], [&](double eps) {
        work[k][i] = x0 + eps;
        const double fp = evaluate(work, where);
        work[k][i] = x0 - eps;
        const double fm = evaluate(work, where);
        work[k][i] = x0;
        return (fp - fm) / (2.0 * eps);
      }, where);
    }
  }
  return acc.finish();
}

GradCheckReport grad_check_parameters(const ParamFn& fn, ParameterStore<double>& store,
                                      const GradCheckOptions& options) {
  auto evaluate = [&](const std::string& where) {
    Graph<double> g(options.mode, options.graph_seed);
    return checked_scalar(fn(g), where);
  };

  Graph<double> g(options.mode, options.graph_seed);
  Var<double> out = fn(g);
  checked_scalar(out, "analytic pass");
  g.backward(out);
  std::map<const Parameter<double>*, Tensor<double>> grads;
  for (auto& [p, grad] : g.parameter_grads()) grads.emplace(p, std::move(grad));

  Accumulator acc{options, {}};
  Rng rng(options.seed);
  for (Parameter<double>* p : store.trainable()) {
    auto it = grads.find(p);
    const Tensor<double> analytic = it != grads.end() ? it->second : Tensor<double>(p->value.shape(), 0.0);
    for (std::size_t i : pick_coords(p->value.size(), options.max_coords_per_tensor, rng)) {
      const std::string where = p->name + "[" + std::to_string(i) + "]";
      const double x0 = p->value[i];
      acc.add(analytic[i], [&](double eps) {
        p->value[i] = x0 + eps;
        const double fp = evaluate(where);
        p->value[i] = x0 - eps;
        const double fm = evaluate(where);
        p->value[i] = x0;
        return (fp - fm) / (2.0 * eps);
      }, where);
    }
  }
  return acc.finish();
}

}  // namespace spkadapt
