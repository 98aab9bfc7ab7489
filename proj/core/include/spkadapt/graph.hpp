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

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spkadapt/parameters.hpp"
#include "spkadapt/rng.hpp"
#include "spkadapt/tensor.hpp"

namespace spkadapt {

enum class Mode { kEval, kTrain };

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
template <typename T>
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph<T>& graph() const {
    if (graph_ == nullptr) throw StateError("Var: handle is not attached to a graph");
    return *graph_;
  }
  std::uint32_t id() const noexcept { return id_; }

  const Tensor<T>& value() const { return graph().value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Graph<T>;
  Var(Graph<T>* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Tape of recorded operations. Nodes are appended in evaluation order, so the
/// tape is acyclic and reverse order is a valid backward schedule.
///
/// A graph is confined to one thread. Parameters are referenced, not copied,
/// and must outlive the graph.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  explicit Graph(Mode mode = Mode::kEval, std::uint64_t seed = 0) : mode_(mode), rng_(seed) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::kTrain; }
  Rng& rng() noexcept { return rng_; }

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var<T> param(const Parameter<T>& parameter);

  /// Appends an op node. `fn` receives the graph and the node id and must
  /// accumulate into the grad buffers of the inputs that require grad.
  Var<T> record(const char* op, Tensor<T> value, std::vector<std::uint32_t> inputs, BackwardFn fn);

  const Tensor<T>& value(std::uint32_t id) const { return nodes_.at(id).value; }
  const char* op_name(std::uint32_t id) const { return nodes_.at(id).op; }
  bool requires_grad(std::uint32_t id) const { return nodes_.at(id).requires_grad; }
  /// Upstream gradient of a node during backward.
  const Tensor<T>& upstream(std::uint32_t id) const { return nodes_.at(id).grad; }
  /// Zero-initialised on first access.
  Tensor<T>& grad_buffer(std::uint32_t id);

  void backward(const Var<T>& loss);
  bool has_backward() const noexcept { return backward_done_; }

  /// Gradient of `v` after backward; zeros for nodes the loss does not reach.
  Tensor<T> grad(const Var<T>& v) const;
  /// Gradients of every trainable parameter referenced by this graph.
  std::vector<std::pair<const Parameter<T>*, Tensor<T>>> parameter_grads() const;

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::uint32_t> inputs;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Node node);

  Mode mode_;
  Rng rng_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::uint32_t> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace spkadapt
