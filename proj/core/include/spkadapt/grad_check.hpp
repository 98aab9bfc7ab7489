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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spkadapt/graph.hpp"

namespace spkadapt {

struct GradCheckOptions {
  double eps = 1e-5;
  double threshold = 1e-4;
  /// Denominator floor of the relative error |a - f| / max(|a|, |f|, floor).
  double floor = 1e-6;
  /// 0 checks every coordinate; otherwise a seeded sample per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  Mode mode = Mode::kEval;
  std::uint64_t graph_seed = 0;
  /// A coordinate over threshold is retried with eps/10, eps/100, ... up to this
  /// many times and keeps its smallest error. For ReLU nets, where a step can
  /// straddle a kink. 0 means strict.
  int kink_retries = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
  /// "<tensor>[<flat index>]" of the worst coordinate.
  std::string worst_location;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// Coordinates that only passed after a smaller step.
  std::size_t retried = 0;
};

double relative_error(double analytic, double numeric, double floor);

/// fn builds a scalar from leaves holding `points`. Analytic gradients come from
/// backward, numeric ones from central differences in fresh graphs.
using LeafFn = std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)>;
GradCheckReport grad_check(const LeafFn& fn, std::span<const Tensor<double>> points,
                           const GradCheckOptions& options = {});

/// Same check over every trainable tensor of `store`, perturbed in place.
using ParamFn = std::function<Var<double>(Graph<double>&)>;
GradCheckReport grad_check_parameters(const ParamFn& fn, ParameterStore<double>& store,
                                      const GradCheckOptions& options = {});

}  // namespace spkadapt
