#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "strc/tensor/tensor.hpp"

namespace strc {

template <typename T>
class Graph;

/// Handle to a node recorded on a Graph.
template <typename T>
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph<T>* graph() const noexcept { return graph_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Graph<T>;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
/// tape backwards visits every node after all of its consumers.
template <typename T>
class Graph {
 public:
  /// Receives the accumulated output gradient and pushes contributions into
  /// the inputs through `accumulate`.
  using BackwardFn = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}); }
  Var<T> leaf(Tensor<T> value) { return push(std::move(value), true, {}); }

  /// Records an operator result. The node requires a gradient iff any input
  /// does; otherwise `fn` is dropped.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }

  /// Seeds d(root)/d(root) = 1; root must hold a single element.
  void backward(Var<T> root);
  void backward(Var<T> root, const Tensor<T>& seed);

  /// Gradient of the last backward root with respect to `v`.
  Tensor<T> grad(Var<T> v) const;

  /// Adds `g` into the gradient buffer of `v` (no-op if `v` needs no grad).
  void accumulate(Var<T> v, const Tensor<T>& g);
  /// Mutable gradient buffer of `v`, allocated on first use; nullptr if `v`
  /// needs no gradient.
  Tensor<T>* grad_buffer(Var<T> v);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn fn);
  const Node& node(Var<T> v) const;
  Node& node(Var<T> v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  if (!graph_) throw UsageError("value() on an unbound Var");
  return graph_->value(*this);
}

template <typename T>
bool Var<T>::requires_grad() const {
  if (!graph_) throw UsageError("requires_grad() on an unbound Var");
  return graph_->requires_grad(*this);
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace strc
