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

#include "spkadapt/graph.hpp"

#include <cmath>
#include <string>

namespace spkadapt {

template <typename T>
Var<T> Graph<T>::push(Node node) {
  if (backward_done_) throw StateError("Graph: cannot record ops after backward");
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::param(const Parameter<T>& parameter) {
  if (auto it = param_nodes_.find(&parameter); it != param_nodes_.end()) {
    return Var<T>(this, it->second);
  }
  Node n;
  n.op = "param";
  // Parameters are copied into the tape so later in-place updates of the
  // store cannot alias saved activations.
  n.value = parameter.value;
  n.requires_grad = parameter.trainable;
  Var<T> v = push(std::move(n));
  param_nodes_.emplace(&parameter, v.id());
  return v;
}

template <typename T>
Var<T> Graph<T>::record(const char* op, Tensor<T> value, std::vector<std::uint32_t> inputs, BackwardFn fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw StateError(std::string("Graph: op ") + op + " references unknown node");
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(std::uint32_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape(), T(0));
  return n.grad;
}

template <typename T>
void Graph<T>::backward(const Var<T>& loss) {
  if (!loss.valid() || &loss.graph() != this) {
    throw StateError("Graph::backward: loss does not belong to this graph (run forward first)");
  }
  if (nodes_.empty()) throw StateError("Graph::backward: nothing has been recorded");
  if (backward_done_) throw StateError("Graph::backward: backward already ran on this graph");
  const Tensor<T>& lv = value(loss.id());
  if (lv.size() != 1) {
    throw DimensionError("Graph::backward: loss must be scalar, got shape " + shape_string(lv.shape()));
  }
  grad_buffer(loss.id())[0] = T(1);
  for (std::int64_t id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, static_cast<std::uint32_t>(id));
  }
  backward_done_ = true;
}

template <typename T>
Tensor<T> Graph<T>::grad(const Var<T>& v) const {
  if (!backward_done_) throw StateError("Graph::grad: backward has not been run");
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor<T>(n.value.shape(), T(0));
  return n.grad;
}

template <typename T>
std::vector<std::pair<const Parameter<T>*, Tensor<T>>> Graph<T>::parameter_grads() const {
  if (!backward_done_) throw StateError("Graph::parameter_grads: backward has not been run");
  std::vector<std::pair<const Parameter<T>*, Tensor<T>>> out;
  out.reserve(param_nodes_.size());
  for (const auto& [p, id] : param_nodes_) {
    if (!p->trainable) continue;
    const Node& n = nodes_[id];
    out.emplace_back(p, n.grad.empty() ? Tensor<T>(n.value.shape(), T(0)) : n.grad);
  }
  return out;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace spkadapt
