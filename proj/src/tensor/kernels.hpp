#pragma once

// Internal dense kernels shared by the plain and the recorded (autograd)
// operators. Single-threaded; loop order fixed so results are bit-stable.

#include <array>
#include <cstddef>
#include <string>

#include "strc/error.hpp"
#include "strc/tensor/functional.hpp"

namespace strc::detail {

using Dims3 = std::array<std::size_t, 3>;

inline std::size_t volume(const Dims3& d) { return d[0] * d[1] * d[2]; }

/// How a conv input tensor is interpreted: optional batch axis, channels,
/// and (depth, height, width) with depth 1 for 2-D data.
struct ConvLayout {
  bool batched = false;
  std::size_t batch = 1;
  std::size_t channels = 0;
  Dims3 spatial{1, 1, 1};
};

inline ConvLayout resolve_layout(const Shape& shape, int dims, const std::string& what) {
  ConvLayout l;
  const std::size_t srank = static_cast<std::size_t>(dims);
  if (shape.size() == srank + 1) {
    l.batched = false;
  } else if (shape.size() == srank + 2) {
    l.batched = true;
  } else {
    throw ShapeError(what + ".rank", "expected rank " + std::to_string(srank + 1) + " or " +
                                         std::to_string(srank + 2) + ", got " + shape_str(shape));
  }
  std::size_t off = 0;
  if (l.batched) l.batch = shape[off++];
  l.channels = shape[off++];
  if (dims == 2) {
    l.spatial = {1, shape[off], shape[off + 1]};
  } else {
    l.spatial = {shape[off], shape[off + 1], shape[off + 2]};
  }
  return l;
}

inline Shape make_shape(const ConvLayout& l, std::size_t channels, const Dims3& spatial, int dims) {
  Shape s;
  if (l.batched) s.push_back(l.batch);
  s.push_back(channels);
  if (dims == 3) s.push_back(spatial[0]);
  s.push_back(spatial[1]);
  s.push_back(spatial[2]);
  return s;
}

/// col[(c, kd, kh, kw), (od, oh, ow)] = x[c, od*s+kd-p, ...] or 0 outside.
template <typename T>
void im2col(const T* x, std::size_t channels, const Dims3& in, const ConvSpec& spec, const Dims3& out,
            T* col) {
  const std::size_t P = volume(out);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* xc = x + c * volume(in);
    for (std::size_t kd = 0; kd < spec.kernel[0]; ++kd)
      for (std::size_t kh = 0; kh < spec.kernel[1]; ++kh)
        for (std::size_t kw = 0; kw < spec.kernel[2]; ++kw, ++row) {
          T* dst = col + row * P;
          for (std::size_t od = 0; od < out[0]; ++od) {
            const long id = static_cast<long>(od * spec.stride[0] + kd) - static_cast<long>(spec.padding[0]);
            for (std::size_t oh = 0; oh < out[1]; ++oh) {
              const long ih = static_cast<long>(oh * spec.stride[1] + kh) - static_cast<long>(spec.padding[1]);
              T* d = dst + (od * out[1] + oh) * out[2];
              if (id < 0 || id >= static_cast<long>(in[0]) || ih < 0 || ih >= static_cast<long>(in[1])) {
                for (std::size_t ow = 0; ow < out[2]; ++ow) d[ow] = T(0);
                continue;
              }
              const T* src = xc + (static_cast<std::size_t>(id) * in[1] + static_cast<std::size_t>(ih)) * in[2];
              for (std::size_t ow = 0; ow < out[2]; ++ow) {
                const long iw = static_cast<long>(ow * spec.stride[2] + kw) - static_cast<long>(spec.padding[2]);
                d[ow] = (iw < 0 || iw >= static_cast<long>(in[2])) ? T(0) : src[iw];
              }
            }
          }
        }
  }
}

/// Adjoint of im2col: scatter-adds col back into x.
template <typename T>
void col2im_add(const T* col, std::size_t channels, const Dims3& in, const ConvSpec& spec,
                const Dims3& out, T* x) {
  const std::size_t P = volume(out);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    T* xc = x + c * volume(in);
    for (std::size_t kd = 0; kd < spec.kernel[0]; ++kd)
      for (std::size_t kh = 0; kh < spec.kernel[1]; ++kh)
        for (std::size_t kw = 0; kw < spec.kernel[2]; ++kw, ++row) {
          const T* srcrow = col + row * P;
          for (std::size_t od = 0; od < out[0]; ++od) {
            const long id = static_cast<long>(od * spec.stride[0] + kd) - static_cast<long>(spec.padding[0]);
            if (id < 0 || id >= static_cast<long>(in[0])) continue;
            for (std::size_t oh = 0; oh < out[1]; ++oh) {
              const long ih = static_cast<long>(oh * spec.stride[1] + kh) - static_cast<long>(spec.padding[1]);
              if (ih < 0 || ih >= static_cast<long>(in[1])) continue;
              const T* s = srcrow + (od * out[1] + oh) * out[2];
              T* dst = xc + (static_cast<std::size_t>(id) * in[1] + static_cast<std::size_t>(ih)) * in[2];
              for (std::size_t ow = 0; ow < out[2]; ++ow) {
                const long iw = static_cast<long>(ow * spec.stride[2] + kw) - static_cast<long>(spec.padding[2]);
                if (iw >= 0 && iw < static_cast<long>(in[2])) dst[iw] += s[ow];
              }
            }
          }
        }
  }
}

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

/// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    for (std::size_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T acc = 0;
      for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
      C[i * N + j] += acc;
    }
  }
}

/// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t k = 0; k < K; ++k) {
    const T* a = A + k * M;
    const T* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const T av = a[i];
      T* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

/// Checks weight/bias shapes against the spec. `transposed` selects the
/// [in, out, k...] layout.
void check_conv_params(const ConvSpec& spec, const Shape& weights, const Shape& bias, bool transposed);

}  // namespace strc::detail
