#include "strc/tensor/functional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bn_internal.hpp"
#include "kernels.hpp"

namespace strc {

void ConvSpec::validate() const {
  if (dims != 2 && dims != 3) throw UsageError("ConvSpec.dims must be 2 or 3, got " + std::to_string(dims));
  if (in_channels == 0 || out_channels == 0) throw UsageError("ConvSpec channel counts must be >= 1");
  for (int a = 0; a < 3; ++a) {
    if (kernel[a] < 1) throw UsageError("ConvSpec.kernel must be >= 1");
    if (stride[a] < 1) throw UsageError("ConvSpec.stride must be >= 1");
  }
  if (dims == 2 && (kernel[0] != 1 || stride[0] != 1 || padding[0] != 0)) {
    throw UsageError("2-D ConvSpec must have unit depth geometry");
  }
}

Shape ConvSpec::weight_shape() const {
  Shape s{out_channels, in_channels};
  if (dims == 3) s.push_back(kernel[0]);
  s.push_back(kernel[1]);
  s.push_back(kernel[2]);
  return s;
}

Shape ConvSpec::transpose_weight_shape() const {
  Shape s = weight_shape();
  std::swap(s[0], s[1]);
  return s;
}

std::array<std::size_t, 3> ConvSpec::conv_output(std::array<std::size_t, 3> in) const {
  std::array<std::size_t, 3> out{};
  static const char* names[] = {"depth", "height", "width"};
  for (int a = 0; a < 3; ++a) {
    const long span = static_cast<long>(in[a] + 2 * padding[a]) - static_cast<long>(kernel[a]);
    if (span < 0) {
      throw ShapeError(names[a], "input " + std::to_string(in[a]) + " (+2*" + std::to_string(padding[a]) +
                                     " padding) smaller than kernel " + std::to_string(kernel[a]));
    }
    out[a] = static_cast<std::size_t>(span) / stride[a] + 1;
  }
  return out;
}

std::array<std::size_t, 3> ConvSpec::transpose_output(std::array<std::size_t, 3> in) const {
  std::array<std::size_t, 3> out{};
  static const char* names[] = {"depth", "height", "width"};
  for (int a = 0; a < 3; ++a) {
    const long v = static_cast<long>((in[a] - 1) * stride[a] + kernel[a]) - 2 * static_cast<long>(padding[a]);
    if (v <= 0) throw ShapeError(names[a], "transposed convolution output would be empty");
    out[a] = static_cast<std::size_t>(v);
  }
  return out;
}

namespace detail {

void check_conv_params(const ConvSpec& spec, const Shape& weights, const Shape& bias, bool transposed) {
  spec.validate();
  const Shape expected = transposed ? spec.transpose_weight_shape() : spec.weight_shape();
  if (weights != expected) {
    for (std::size_t i = 0; i < std::min(weights.size(), expected.size()); ++i) {
      if (weights[i] != expected[i]) {
        throw ShapeError("weights[" + std::to_string(i) + "]",
                         "expected " + shape_str(expected) + ", got " + shape_str(weights));
      }
    }
    throw ShapeError("weights.rank", "expected " + shape_str(expected) + ", got " + shape_str(weights));
  }
  if (bias != Shape{spec.out_channels}) {
    throw ShapeError("bias", "expected [" + std::to_string(spec.out_channels) + "], got " + shape_str(bias));
  }
}

template <typename T>
void batch_norm_train_core(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                           Tensor<T>& out, std::vector<T>& mean, std::vector<T>& invstd, std::vector<T>& var) {
  const std::size_t N = x.dim(0), C = x.dim(1);
  const std::size_t S = x.numel() / (N * C);
  const T count = static_cast<T>(N * S);
  mean.assign(C, T(0));
  invstd.assign(C, T(0));
  var.assign(C, T(0));
  for (std::size_t c = 0; c < C; ++c) {
    T sum = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) sum += p[s];
    }
    const T m = sum / count;
    T sq = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) sq += (p[s] - m) * (p[s] - m);
    }
    mean[c] = m;
    var[c] = sq / count;
    invstd[c] = T(1) / std::sqrt(var[c] + eps);
    const T g = gamma[c] * invstd[c], b = beta[c];
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.ptr() + (n * C + c) * S;
      T* o = out.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) o[s] = (p[s] - m) * g + b;
    }
  }
}

template void batch_norm_train_core<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                           float, Tensor<float>&, std::vector<float>&, std::vector<float>&,
                                           std::vector<float>&);
template void batch_norm_train_core<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                            double, Tensor<double>&, std::vector<double>&, std::vector<double>&,
                                            std::vector<double>&);

template <typename T>
void check_bn_params(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (!(eps > T(0))) throw UsageError("batch_norm eps must be positive");
  if (x.rank() < 2) throw ShapeError("input.rank", "batch_norm expects [N, C, ...], got " + shape_str(x.shape()));
  const Shape cs{x.dim(1)};
  if (gamma.shape() != cs) throw ShapeError("gamma", "expected " + shape_str(cs) + ", got " + shape_str(gamma.shape()));
  if (beta.shape() != cs) throw ShapeError("beta", "expected " + shape_str(cs) + ", got " + shape_str(beta.shape()));
}

template void check_bn_params<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, float);
template void check_bn_params<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, double);

template <typename T>
void update_running_stats(BatchNormState<T>& state, const std::vector<T>& mean, const std::vector<T>& var,
                          std::size_t count) {
  const std::size_t C = mean.size();
  if (state.running_mean.shape() != Shape{C} || state.running_var.shape() != Shape{C}) {
    throw ShapeError("running_stats", "expected [" + std::to_string(C) + "]");
  }
  const T unbias = count > 1 ? static_cast<T>(count) / static_cast<T>(count - 1) : T(1);
  const T m = state.momentum;
  for (std::size_t c = 0; c < C; ++c) {
    state.running_mean[c] = (T(1) - m) * state.running_mean[c] + m * mean[c];
    state.running_var[c] = (T(1) - m) * state.running_var[c] + m * var[c] * unbias;
  }
}

template void update_running_stats<float>(BatchNormState<float>&, const std::vector<float>&,
                                          const std::vector<float>&, std::size_t);
template void update_running_stats<double>(BatchNormState<double>&, const std::vector<double>&,
                                           const std::vector<double>&, std::size_t);

}  // namespace detail

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weights,
                       const Tensor<T>& bias) {
  detail::check_conv_params(spec, weights.shape(), bias.shape(), false);
  const auto l = detail::resolve_layout(input.shape(), spec.dims, "input");
  if (l.channels != spec.in_channels) {
    throw ShapeError("channels", "input has " + std::to_string(l.channels) + ", spec expects " +
                                     std::to_string(spec.in_channels));
  }
  const auto out = spec.conv_output(l.spatial);
  const std::size_t P = detail::volume(out), K = spec.in_channels * spec.kernel_volume();
  Tensor<T> result(detail::make_shape(l, spec.out_channels, out, spec.dims));
  std::vector<T> col(K * P);
  const std::size_t in_stride = l.channels * detail::volume(l.spatial);
  const std::size_t out_stride = spec.out_channels * P;
  for (std::size_t n = 0; n < l.batch; ++n) {
    detail::im2col(input.ptr() + n * in_stride, l.channels, l.spatial, spec, out, col.data());
    T* o = result.ptr() + n * out_stride;
    for (std::size_t co = 0; co < spec.out_channels; ++co)
      for (std::size_t p = 0; p < P; ++p) o[co * P + p] = bias[co];
    detail::gemm_nn(spec.out_channels, P, K, weights.ptr(), col.data(), o);
  }
  return result;
}

template <typename T>
Tensor<T> conv_transpose_forward(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weights,
                                 const Tensor<T>& bias) {
  detail::check_conv_params(spec, weights.shape(), bias.shape(), true);
  const auto l = detail::resolve_layout(input.shape(), spec.dims, "input");
  if (l.channels != spec.in_channels) {
    throw ShapeError("channels", "input has " + std::to_string(l.channels) + ", spec expects " +
                                     std::to_string(spec.in_channels));
  }
  // The transposed op scatters each input position; in im2col terms the
  // input plays the role of the conv output and the result the conv input.
  const auto out = spec.transpose_output(l.spatial);
  const std::size_t Pin = detail::volume(l.spatial), Pout = detail::volume(out);
  const std::size_t K = spec.out_channels * spec.kernel_volume();
  Tensor<T> result(detail::make_shape(l, spec.out_channels, out, spec.dims));
  std::vector<T> col(K * Pin);
  for (std::size_t n = 0; n < l.batch; ++n) {
    std::fill(col.begin(), col.end(), T(0));
    detail::gemm_tn(K, Pin, spec.in_channels, weights.ptr(), input.ptr() + n * spec.in_channels * Pin, col.data());
    T* o = result.ptr() + n * spec.out_channels * Pout;
    detail::col2im_add(col.data(), spec.out_channels, out, spec, l.spatial, o);
    for (std::size_t co = 0; co < spec.out_channels; ++co)
      for (std::size_t p = 0; p < Pout; ++p) o[co * Pout + p] += bias[co];
  }
  return result;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, T eps, NormMode mode,
                     BatchNormState<T>* state) {
  detail::check_bn_params(input, gamma, beta, eps);
  Tensor<T> out(input.shape());
  if (mode == NormMode::train) {
    std::vector<T> mean, invstd, var;
    detail::batch_norm_train_core(input, gamma, beta, eps, out, mean, invstd, var);
    if (state) detail::update_running_stats(*state, mean, var, input.numel() / input.dim(1));
    return out;
  }
  if (!state) throw UsageError("batch_norm eval mode requires running statistics");
  const std::size_t N = input.dim(0), C = input.dim(1), S = input.numel() / (N * C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T inv = T(1) / std::sqrt(state->running_var[c] + eps);
      const T m = state->running_mean[c];
      const T* p = input.ptr() + (n * C + c) * S;
      T* o = out.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) o[s] = (p[s] - m) * inv * gamma[c] + beta[c];
    }
  return out;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation act) {
  Tensor<T> out(input.shape());
  const T slope = static_cast<T>(act.slope);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const T v = input[i];
    switch (act.kind) {
      case Activation::Kind::leaky_relu: out[i] = v > T(0) ? v : slope * v; break;
      case Activation::Kind::tanh: out[i] = std::tanh(v); break;
      // Rounding would otherwise reach exactly 0 or 1 for |v| beyond ~37 (double).
      case Activation::Kind::sigmoid:
        out[i] = std::clamp(T(1) / (T(1) + std::exp(-v)), std::numeric_limits<T>::min(),
                            T(1) - std::numeric_limits<T>::epsilon() / 2);
        break;
    }
  }
  return out;
}

#define STRC_INSTANTIATE(T)                                                                             \
  template Tensor<T> conv_forward(const Tensor<T>&, const ConvSpec&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> conv_transpose_forward(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,          \
                                            const Tensor<T>&);                                           \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T, NormMode,        \
                                BatchNormState<T>*);                                                     \
  template Tensor<T> activation(const Tensor<T>&, Activation);

STRC_INSTANTIATE(float)
STRC_INSTANTIATE(double)
#undef STRC_INSTANTIATE

}  // namespace strc
