#pragma once

// Recorded operators. Each returns a Var on the same graph as its inputs and
// registers the matching vector-Jacobian product for Graph::backward.

#include "strc/tensor/functional.hpp"
#include "strc/tensor/graph.hpp"

namespace strc::ag {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T s);

/// x[N, C, ...] * m[N, 1, ...], the gate broadcast over channels.
template <typename T> Var<T> mul_channel_broadcast(Var<T> x, Var<T> m);

template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
/// Mean over one axis; that axis is removed from the shape.
template <typename T> Var<T> mean_axis(Var<T> a, std::size_t axis);
template <typename T> Var<T> reshape(Var<T> a, Shape shape);
/// Channels [begin, end) of an [N, C, ...] tensor.
template <typename T> Var<T> slice_channels(Var<T> a, std::size_t begin, std::size_t end);

template <typename T> Var<T> act(Var<T> x, Activation a);
template <typename T> Var<T> leaky_relu(Var<T> x, double slope = 0.2) { return act(x, Activation::leaky_relu(slope)); }
template <typename T> Var<T> tanh(Var<T> x) { return act(x, Activation::tanh()); }
template <typename T> Var<T> sigmoid(Var<T> x) { return act(x, Activation::sigmoid()); }

template <typename T> Var<T> conv(Var<T> x, Var<T> w, Var<T> b, const ConvSpec& spec);
template <typename T> Var<T> conv_transpose(Var<T> x, Var<T> w, Var<T> b, const ConvSpec& spec);
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps, NormMode mode, BatchNormState<T>* state);

/// Mean binary cross-entropy of probabilities against a constant target in
/// {0, 1}. Probabilities are clamped to [eps, 1 - eps].
template <typename T> Var<T> bce(Var<T> p, T target, T eps = T(1e-7));
/// Mean absolute difference.
template <typename T> Var<T> l1(Var<T> a, Var<T> b);
/// Mean squared difference.
template <typename T> Var<T> mse(Var<T> a, Var<T> b);

}  // namespace strc::ag
