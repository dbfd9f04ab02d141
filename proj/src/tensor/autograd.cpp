#include "strc/tensor/autograd.hpp"

#include <cmath>

#include "bn_internal.hpp"
#include "kernels.hpp"

namespace strc::ag {
namespace {

template <typename T>
void require_same_shape(Var<T> a, Var<T> b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(what, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return a.graph()->record(std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& go) {
    g.accumulate(a, go);
    g.accumulate(b, go);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return a.graph()->record(std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& go) {
    g.accumulate(a, go);
    if (auto* gb = g.grad_buffer(b))
      for (std::size_t i = 0; i < go.numel(); ++i) (*gb)[i] -= go[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return a.graph()->record(std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& go) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    if (auto* ga = g.grad_buffer(a))
      for (std::size_t i = 0; i < go.numel(); ++i) (*ga)[i] += go[i] * bv[i];
    if (auto* gb = g.grad_buffer(b))
      for (std::size_t i = 0; i < go.numel(); ++i) (*gb)[i] += go[i] * av[i];
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.graph()->record(std::move(out), {a}, [a, s](Graph<T>& g, const Tensor<T>& go) {
    if (auto* ga = g.grad_buffer(a))
      for (std::size_t i = 0; i < go.numel(); ++i) (*ga)[i] += go[i] * s;
  });
}

template <typename T>
Var<T> mul_channel_broadcast(Var<T> x, Var<T> m) {
  const auto& xs = x.shape();
  const auto& ms = m.shape();
  if (xs.size() < 3 || ms.size() != xs.size() || ms[0] != xs[0] || ms[1] != 1 ||
      !std::equal(xs.begin() + 2, xs.end(), ms.begin() + 2)) {
    throw ShapeError("gate", "cannot broadcast " + shape_str(ms) + " over " + shape_str(xs));
  }
  const std::size_t N = xs[0], C = xs[1], S = x.value().numel() / (N * C);
  Tensor<T> out = x.value();
  const auto& mv = m.value();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < S; ++s) out[(n * C + c) * S + s] *= mv[n * S + s];
  return x.graph()->record(std::move(out), {x, m}, [x, m, N, C, S](Graph<T>& g, const Tensor<T>& go) {
    const auto& xv = g.value(x);
    const auto& mv = g.value(m);
    if (auto* gx = g.grad_buffer(x))
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t s = 0; s < S; ++s) (*gx)[(n * C + c) * S + s] += go[(n * C + c) * S + s] * mv[n * S + s];
    if (auto* gm = g.grad_buffer(m))
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t s = 0; s < S; ++s) (*gm)[n * S + s] += go[(n * C + c) * S + s] * xv[(n * C + c) * S + s];
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value().data()) s += v;
  return a.graph()->record(Tensor<T>::scalar(s), {a}, [a](Graph<T>& g, const Tensor<T>& go) {
    if (auto* ga = g.grad_buffer(a))
      for (auto& v : ga->data()) v += go[0];
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const T n = static_cast<T>(a.value().numel());
  T s = 0;
  for (T v : a.value().data()) s += v;
  return a.graph()->record(Tensor<T>::scalar(s / n), {a}, [a, n](Graph<T>& g, const Tensor<T>& go) {
    if (auto* ga = g.grad_buffer(a))
      for (auto& v : ga->data()) v += go[0] / n;
  });
}

template <typename T>
Var<T> mean_axis(Var<T> a, std::size_t axis) {
  const auto& s = a.shape();
  if (axis >= s.size() || s.size() < 2) throw ShapeError("axis", "cannot reduce axis of " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape os;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) os.push_back(s[i]);
  Tensor<T> out(os);
  const auto& av = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * len + k) * inner + i];
  for (auto& v : out.data()) v /= static_cast<T>(len);
  return a.graph()->record(std::move(out), {a}, [a, outer, inner, len](Graph<T>& g, const Tensor<T>& go) {
    if (auto* ga = g.grad_buffer(a))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < len; ++k)
          for (std::size_t i = 0; i < inner; ++i)
            (*ga)[(o * len + k) * inner + i] += go[o * inner + i] / static_cast<T>(len);
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.graph()->record(std::move(out), {a}, [a](Graph<T>& g, const Tensor<T>& go) {
    if (auto* ga = g.grad_buffer(a))
      for (std::size_t i = 0; i < go.numel(); ++i) (*ga)[i] += go[i];
  });
}

template <typename T>
Var<T> slice_channels(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& s = a.shape();
  if (s.size() < 2 || begin >= end || end > s[1]) {
    throw ShapeError("channels", "slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_str(s));
  }
  const std::size_t N = s[0], C = s[1], S = a.value().numel() / (N * C), Cs = end - begin;
  Shape os = s;
  os[1] = Cs;
  Tensor<T> out(os);
  const auto& av = a.value();
  for (std::size_t n = 0; n < N; ++n)
    std::copy_n(av.ptr() + (n * C + begin) * S, Cs * S, out.ptr() + n * Cs * S);
  return a.graph()->record(std::move(out), {a}, [a, N, C, S, Cs, begin](Graph<T>& g, const Tensor<T>& go) {
    if (auto* ga = g.grad_buffer(a))
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Cs * S; ++i) (*ga)[(n * C + begin) * S + i] += go[n * Cs * S + i];
  });
}

template <typename T>
Var<T> act(Var<T> x, Activation a) {
  Tensor<T> out = activation(x.value(), a);
  return x.graph()->record(std::move(out), {x}, [x, a](Graph<T>& g, const Tensor<T>& go) {
    auto* gx = g.grad_buffer(x);
    if (!gx) return;
    const auto& xv = g.value(x);
    const T slope = static_cast<T>(a.slope);
    switch (a.kind) {
      case Activation::Kind::leaky_relu:
        for (std::size_t i = 0; i < go.numel(); ++i) (*gx)[i] += xv[i] > T(0) ? go[i] : slope * go[i];
        break;
      case Activation::Kind::tanh:
        for (std::size_t i = 0; i < go.numel(); ++i) {
          const T y = std::tanh(xv[i]);
          (*gx)[i] += go[i] * (T(1) - y * y);
        }
        break;
      case Activation::Kind::sigmoid:
        for (std::size_t i = 0; i < go.numel(); ++i) {
          const T y = T(1) / (T(1) + std::exp(-xv[i]));
          (*gx)[i] += go[i] * y * (T(1) - y);
        }
        break;
    }
  });
}

template <typename T>
Var<T> conv(Var<T> x, Var<T> w, Var<T> b, const ConvSpec& spec) {
  Tensor<T> out = conv_forward(x.value(), spec, w.value(), b.value());
  return x.graph()->record(std::move(out), {x, w, b}, [x, w, b, spec](Graph<T>& g, const Tensor<T>& go) {
    const auto& xv = g.value(x);
    const auto& wv = g.value(w);
    const auto l = detail::resolve_layout(xv.shape(), spec.dims, "input");
    const auto out = spec.conv_output(l.spatial);
    const std::size_t P = detail::volume(out), K = spec.in_channels * spec.kernel_volume();
    const std::size_t Cout = spec.out_channels, in_stride = l.channels * detail::volume(l.spatial);
    auto* gx = g.grad_buffer(x);
    auto* gw = g.grad_buffer(w);
    auto* gb = g.grad_buffer(b);
    std::vector<T> col(K * P), gcol;
    if (gx) gcol.resize(K * P);
    for (std::size_t n = 0; n < l.batch; ++n) {
      const T* gon = go.ptr() + n * Cout * P;
      if (gb)
        for (std::size_t co = 0; co < Cout; ++co)
          for (std::size_t p = 0; p < P; ++p) (*gb)[co] += gon[co * P + p];
      if (gw) {
        detail::im2col(xv.ptr() + n * in_stride, l.channels, l.spatial, spec, out, col.data());
        detail::gemm_nt(Cout, K, P, gon, col.data(), gw->ptr());
      }
      if (gx) {
        std::fill(gcol.begin(), gcol.end(), T(0));
        detail::gemm_tn(K, P, Cout, wv.ptr(), gon, gcol.data());
        detail::col2im_add(gcol.data(), l.channels, l.spatial, spec, out, gx->ptr() + n * in_stride);
      }
    }
  });
}

template <typename T>
Var<T> conv_transpose(Var<T> x, Var<T> w, Var<T> b, const ConvSpec& spec) {
  Tensor<T> out = conv_transpose_forward(x.value(), spec, w.value(), b.value());
  return x.graph()->record(std::move(out), {x, w, b}, [x, w, b, spec](Graph<T>& g, const Tensor<T>& go) {
    const auto& xv = g.value(x);
    const auto& wv = g.value(w);
    const auto l = detail::resolve_layout(xv.shape(), spec.dims, "input");
    const auto out = spec.transpose_output(l.spatial);
    const std::size_t Pin = detail::volume(l.spatial), Pout = detail::volume(out);
    const std::size_t Kr = spec.out_channels * spec.kernel_volume(), Cin = spec.in_channels;
    auto* gx = g.grad_buffer(x);
    auto* gw = g.grad_buffer(w);
    auto* gb = g.grad_buffer(b);
    std::vector<T> gcol(Kr * Pin);
    for (std::size_t n = 0; n < l.batch; ++n) {
      const T* gon = go.ptr() + n * spec.out_channels * Pout;
      if (gb)
        for (std::size_t co = 0; co < spec.out_channels; ++co)
          for (std::size_t p = 0; p < Pout; ++p) (*gb)[co] += gon[co * Pout + p];
      if (!gx && !gw) continue;
      detail::im2col(gon, spec.out_channels, out, spec, l.spatial, gcol.data());
      if (gx) detail::gemm_nn(Cin, Pin, Kr, wv.ptr(), gcol.data(), gx->ptr() + n * Cin * Pin);
      if (gw) detail::gemm_nt(Cin, Kr, Pin, xv.ptr() + n * Cin * Pin, gcol.data(), gw->ptr());
    }
  });
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps, NormMode mode, BatchNormState<T>* state) {
  const auto& xv = x.value();
  detail::check_bn_params(xv, gamma.value(), beta.value(), eps);
  const std::size_t N = xv.dim(0), C = xv.dim(1), S = xv.numel() / (N * C);
  Tensor<T> out(xv.shape());
  std::vector<T> mean(C), invstd(C), var;
  if (mode == NormMode::train) {
    detail::batch_norm_train_core(xv, gamma.value(), beta.value(), eps, out, mean, invstd, var);
    if (state) detail::update_running_stats(*state, mean, var, N * S);
  } else {
    out = strc::batch_norm(xv, gamma.value(), beta.value(), eps, mode, state);
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = state->running_mean[c];
      invstd[c] = T(1) / std::sqrt(state->running_var[c] + eps);
    }
  }
  const bool train = mode == NormMode::train;
  return x.graph()->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, mean = std::move(mean), invstd = std::move(invstd), N, C, S, train](Graph<T>& g,
                                                                                           const Tensor<T>& go) {
        const auto& xv = g.value(x);
        const auto& gv = g.value(gamma);
        auto* gx = g.grad_buffer(x);
        auto* gg = g.grad_buffer(gamma);
        auto* gbeta = g.grad_buffer(beta);
        const T count = static_cast<T>(N * S);
        for (std::size_t c = 0; c < C; ++c) {
          T sum_go = 0, sum_go_xhat = 0;
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * S;
            for (std::size_t s = 0; s < S; ++s) {
              const T xhat = (xv[base + s] - mean[c]) * invstd[c];
              sum_go += go[base + s];
              sum_go_xhat += go[base + s] * xhat;
            }
          }
          if (gg) (*gg)[c] += sum_go_xhat;
          if (gbeta) (*gbeta)[c] += sum_go;
          if (!gx) continue;
          const T k = gv[c] * invstd[c];
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * S;
            for (std::size_t s = 0; s < S; ++s) {
              if (train) {
                const T xhat = (xv[base + s] - mean[c]) * invstd[c];
                (*gx)[base + s] += k * (go[base + s] - sum_go / count - xhat * sum_go_xhat / count);
              } else {
                (*gx)[base + s] += k * go[base + s];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> bce(Var<T> p, T target, T eps) {
  const auto& pv = p.value();
  const T n = static_cast<T>(pv.numel());
  T total = 0;
  for (T v : pv.data()) {
    const T c = std::clamp(v, eps, T(1) - eps);
    total -= target * std::log(c) + (T(1) - target) * std::log(T(1) - c);
  }
  return p.graph()->record(Tensor<T>::scalar(total / n), {p}, [p, target, eps, n](Graph<T>& g, const Tensor<T>& go) {
    auto* gp = g.grad_buffer(p);
    if (!gp) return;
    const auto& pv = g.value(p);
    for (std::size_t i = 0; i < pv.numel(); ++i) {
      const T v = pv[i];
      if (v < eps || v > T(1) - eps) continue;
      (*gp)[i] += go[0] * (-(target / v) + (T(1) - target) / (T(1) - v)) / n;
    }
  });
}

template <typename T>
Var<T> l1(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "l1");
  const auto& av = a.value();
  const auto& bv = b.value();
  const T n = static_cast<T>(av.numel());
  T total = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) total += std::abs(av[i] - bv[i]);
  return a.graph()->record(Tensor<T>::scalar(total / n), {a, b}, [a, b, n](Graph<T>& g, const Tensor<T>& go) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    auto* ga = g.grad_buffer(a);
    auto* gb = g.grad_buffer(b);
    for (std::size_t i = 0; i < av.numel(); ++i) {
      const T d = av[i] - bv[i];
      const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (ga) (*ga)[i] += go[0] * s / n;
      if (gb) (*gb)[i] -= go[0] * s / n;
    }
  });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mse");
  const auto& av = a.value();
  const auto& bv = b.value();
  const T n = static_cast<T>(av.numel());
  T total = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) total += (av[i] - bv[i]) * (av[i] - bv[i]);
  return a.graph()->record(Tensor<T>::scalar(total / n), {a, b}, [a, b, n](Graph<T>& g, const Tensor<T>& go) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    auto* ga = g.grad_buffer(a);
    auto* gb = g.grad_buffer(b);
    for (std::size_t i = 0; i < av.numel(); ++i) {
      const T d = T(2) * (av[i] - bv[i]) / n;
      if (ga) (*ga)[i] += go[0] * d;
      if (gb) (*gb)[i] -= go[0] * d;
    }
  });
}

#define STRC_INSTANTIATE(T)                                                                     \
  template Var<T> add(Var<T>, Var<T>);                                                          \
  template Var<T> sub(Var<T>, Var<T>);                                                          \
  template Var<T> mul(Var<T>, Var<T>);                                                          \
  template Var<T> scale(Var<T>, T);                                                             \
  template Var<T> mul_channel_broadcast(Var<T>, Var<T>);                                        \
  template Var<T> sum(Var<T>);                                                                  \
  template Var<T> mean(Var<T>);                                                                 \
  template Var<T> mean_axis(Var<T>, std::size_t);                                               \
  template Var<T> reshape(Var<T>, Shape);                                                       \
  template Var<T> slice_channels(Var<T>, std::size_t, std::size_t);                             \
  template Var<T> act(Var<T>, Activation);                                                      \
  template Var<T> conv(Var<T>, Var<T>, Var<T>, const ConvSpec&);                                \
  template Var<T> conv_transpose(Var<T>, Var<T>, Var<T>, const ConvSpec&);                      \
  template Var<T> batch_norm(Var<T>, Var<T>, Var<T>, T, NormMode, BatchNormState<T>*);          \
  template Var<T> bce(Var<T>, T, T);                                                            \
  template Var<T> l1(Var<T>, Var<T>);                                                           \
  template Var<T> mse(Var<T>, Var<T>);

STRC_INSTANTIATE(float)
STRC_INSTANTIATE(double)
#undef STRC_INSTANTIATE

}  // namespace strc::ag
