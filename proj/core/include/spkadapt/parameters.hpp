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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "spkadapt/tensor.hpp"

namespace spkadapt {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

/// Named parameter tensors with stable addresses. Iteration order is the
/// lexicographic name order, which is also the checkpoint order.
template <typename T>
class ParameterStore {
 public:
  using Map = std::map<std::string, std::unique_ptr<Parameter<T>>>;

  ParameterStore() = default;
  ParameterStore(const ParameterStore& other) { *this = other; }
  ParameterStore& operator=(const ParameterStore& other) {
    if (this == &other) return *this;
    params_.clear();
    for (const auto& [name, p] : other.params_) {
      params_.emplace(name, std::make_unique<Parameter<T>>(*p));
    }
    return *this;
  }
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    auto [it, inserted] =
        params_.emplace(name, std::make_unique<Parameter<T>>(Parameter<T>{name, std::move(value), trainable}));
    if (!inserted) throw ConfigError("ParameterStore: duplicate parameter '" + name + "'");
    return *it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw LookupError("ParameterStore: unknown parameter '" + name + "'");
    return *it->second;
  }
  const Parameter<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw LookupError("ParameterStore: unknown parameter '" + name + "'");
    return *it->second;
  }

  void erase(const std::string& name) { params_.erase(name); }

  const Map& entries() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }

  void set_all_trainable(bool trainable) {
    for (auto& [_, p] : params_) p->trainable = trainable;
  }
  void set_trainable_with_prefix(const std::string& prefix, bool trainable) {
    for (auto& [name, p] : params_) {
      if (name.rfind(prefix, 0) == 0) p->trainable = trainable;
    }
  }

  /// Scalar count of all (or only trainable) parameters.
  std::size_t count(bool trainable_only = false) const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) {
      if (!trainable_only || p->trainable) n += p->value.size();
    }
    return n;
  }
  std::size_t count_with_prefix(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) {
      if (name.rfind(prefix, 0) == 0) n += p->value.size();
    }
    return n;
  }

  std::vector<Parameter<T>*> trainable() const {
    std::vector<Parameter<T>*> out;
    for (const auto& [_, p] : params_) {
      if (p->trainable) out.push_back(p.get());
    }
    return out;
  }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, p] : params_) out.add(name, p->value.template cast<U>(), p->trainable);
    return out;
  }

 private:
  Map params_;
};

}  // namespace spkadapt
