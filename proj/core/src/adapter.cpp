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

#include "spkadapt/adapter.hpp"

#include "spkadapt/errors.hpp"
#include "spkadapt/ops.hpp"

namespace spkadapt {

char module_tag(SiteModule module) noexcept {
  switch (module) {
    case SiteModule::kEncoder: return 'e';
    case SiteModule::kVariance: return 'v';
    case SiteModule::kDecoder: return 'd';
  }
  return '?';
}

SiteModule module_from_tag(char tag) {
  switch (tag) {
    case 'e': return SiteModule::kEncoder;
    case 'v': return SiteModule::kVariance;
    case 'd': return SiteModule::kDecoder;
    default: throw LookupError(std::string("unknown adapter module tag '") + tag + "'");
  }
}

std::string SiteId::name() const { return std::string(1, module_tag(module)) + std::to_string(layer); }

template <typename T>
Var<T> adapter_forward(const Var<T>& h, const AdapterVars<T>& w) {
  const std::size_t d_h = h.cols();
  const auto& wd = w.w_down.shape();
  const auto& wu = w.w_up.shape();
  if (wd.size() != 2 || wu.size() != 2 || wd[0] != d_h || wu[1] != d_h || wd[1] != wu[0] ||
      w.b_down.value().size() != wd[1] || w.b_up.value().size() != d_h) {
    throw DimensionError("adapter_forward: weights " + shape_string(wd) + "/" + shape_string(wu) +
                         " do not fit hidden size " + std::to_string(d_h));
  }
  const Var<T> down = ops::relu(ops::linear(h, w.w_down, w.b_down));
  return ops::add(h, ops::linear(down, w.w_up, w.b_up));
}

template Var<float> adapter_forward(const Var<float>&, const AdapterVars<float>&);
template Var<double> adapter_forward(const Var<double>&, const AdapterVars<double>&);

}  // namespace spkadapt
