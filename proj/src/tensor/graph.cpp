#include "strc/tensor/graph.hpp"

namespace strc {

template <typename T>
Var<T> Graph<T>::push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.graph() != this) throw UsageError("operator input recorded on a different graph");
    needs = needs || node(in).requires_grad;
  }
  return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var<T> v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) throw UsageError("Var does not belong to this graph");
  return nodes_[v.id()];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var<T> v) {
  if (v.graph() != this || v.id() >= nodes_.size()) throw UsageError("Var does not belong to this graph");
  return nodes_[v.id()];
}

template <typename T>
void Graph<T>::backward(Var<T> root) {
  if (!root.valid()) throw UsageError("backward() called before any forward pass");
  const auto& v = node(root).value;
  if (v.numel() != 1) throw UsageError("backward() without seed requires a scalar root, got " + shape_str(v.shape()));
  backward(root, Tensor<T>(v.shape(), T(1)));
}

template <typename T>
void Graph<T>::backward(Var<T> root, const Tensor<T>& seed) {
  if (!root.valid() || nodes_.empty()) throw UsageError("backward() called before any forward pass");
  Node& r = node(root);
  if (seed.shape() != r.value.shape()) {
    throw ShapeError("seed", "expected " + shape_str(r.value.shape()) + ", got " + shape_str(seed.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor<T>();
  }
  r.grad = seed;
  r.has_grad = true;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
  backward_done_ = true;
}

template <typename T>
Tensor<T> Graph<T>::grad(Var<T> v) const {
  if (!backward_done_) throw UsageError("grad() requested before backward()");
  const Node& n = node(v);
  if (!n.requires_grad) throw UsageError("grad() requested for a node that does not require gradients");
  if (!n.has_grad) return Tensor<T>(n.value.shape(), T(0));
  return n.grad;
}

template <typename T>
Tensor<T>* Graph<T>::grad_buffer(Var<T> v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape(), T(0));
    n.has_grad = true;
  }
  return &n.grad;
}

template <typename T>
void Graph<T>::accumulate(Var<T> v, const Tensor<T>& g) {
  Tensor<T>* buf = grad_buffer(v);
  if (!buf) return;
  if (g.shape() != buf->shape()) {
    throw ShapeError("gradient", "expected " + shape_str(buf->shape()) + ", got " + shape_str(g.shape()));
  }
  for (std::size_t i = 0; i < g.numel(); ++i) (*buf)[i] += g[i];
}

template class Graph<float>;
template class Graph<double>;

}  // namespace strc
