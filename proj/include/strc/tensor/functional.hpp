#pragma once

#include <array>
#include <cstddef>

#include "strc/tensor/tensor.hpp"

namespace strc {

/// Geometry of a 2-D or 3-D convolution. Per-axis arrays are ordered
/// (depth, height, width); for 2-D convolutions the depth entries are
/// kernel 1, stride 1, padding 0.
struct ConvSpec {
  int dims = 2;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};

  static ConvSpec conv2d(std::size_t cin, std::size_t cout, std::size_t k, std::size_t s = 1,
                         std::size_t p = 0) {
    return ConvSpec{2, cin, cout, {1, k, k}, {1, s, s}, {0, p, p}};
  }
  static ConvSpec conv3d(std::size_t cin, std::size_t cout, std::array<std::size_t, 3> k,
                         std::array<std::size_t, 3> s, std::array<std::size_t, 3> p) {
    return ConvSpec{3, cin, cout, k, s, p};
  }

  /// Throws UsageError unless dims ∈ {2,3}, kernel ≥ 1, stride ≥ 1, channels ≥ 1.
  void validate() const;

  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }

  /// [out, in, k...] for convolution.
  Shape weight_shape() const;
  /// [in, out, k...] for transposed convolution.
  Shape transpose_weight_shape() const;

  /// floor((in + 2p - k)/s) + 1 on each spatial axis; throws if non-positive.
  std::array<std::size_t, 3> conv_output(std::array<std::size_t, 3> in) const;
  /// (in - 1)s - 2p + k on each spatial axis.
  std::array<std::size_t, 3> transpose_output(std::array<std::size_t, 3> in) const;
};

/// Convolution of [C_in, spatial...] or [N, C_in, spatial...]. The output
/// keeps the batched/unbatched layout of the input.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weights,
                       const Tensor<T>& bias);

/// Adjoint of conv_forward with respect to its input (plus bias). `weights`
/// is laid out [C_in, C_out, k...].
template <typename T>
Tensor<T> conv_transpose_forward(const Tensor<T>& input, const ConvSpec& spec,
                                 const Tensor<T>& weights, const Tensor<T>& bias);

enum class NormMode { train, eval };

/// Running statistics carried across batch-norm calls.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

/// Batch normalization over [N, C, spatial...]. In train mode batch
/// statistics are used and `state` (if given) is updated by EMA; in eval
/// mode the running statistics are used.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     NormMode mode, BatchNormState<T>* state);

struct Activation {
  enum class Kind { leaky_relu, tanh, sigmoid };
  Kind kind = Kind::leaky_relu;
  double slope = 0.2;

  static Activation leaky_relu(double slope = 0.2) { return {Kind::leaky_relu, slope}; }
  static Activation tanh() { return {Kind::tanh, 0.0}; }
  static Activation sigmoid() { return {Kind::sigmoid, 0.0}; }
};

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation act);

}  // namespace strc
