#include "strc/training/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "strc/metrics/metrics.hpp"

namespace strc {

template <typename T>
Var<T> adversarial_loss(Var<T> d_out, bool real) {
  return ag::bce(d_out, real ? T(1) : T(0), T(1e-7));
}

template <typename T>
Var<T> cycle_loss(Var<T> x, Var<T> reconstructed) {
  if (x.shape() != reconstructed.shape()) {
    throw ShapeError("reconstruction", shape_str(x.shape()) + " vs " + shape_str(reconstructed.shape()));
  }
  return ag::l1(x, reconstructed);
}

namespace {

// Median of a plane plus d(median)/dL. Tied middle values get no gradient:
// the median is then locally flat in every single coordinate.
struct Background {
  double value = 0;
  std::vector<std::pair<std::size_t, double>> grad;
};

Background median_with_grad(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  const std::size_t n = v.size();
  auto unique_at = [&](std::size_t r) {
    const double x = v[order[r]];
    return (r == 0 || v[order[r - 1]] != x) && (r + 1 == n || v[order[r + 1]] != x);
  };
  Background bg;
  if (n % 2 == 1) {
    bg.value = v[order[n / 2]];
    if (unique_at(n / 2)) bg.grad.push_back({order[n / 2], 1.0});
  } else {
    const std::size_t lo = n / 2 - 1, hi = n / 2;
    bg.value = 0.5 * (v[order[lo]] + v[order[hi]]);
    if (unique_at(lo)) bg.grad.push_back({order[lo], 0.5});
    if (unique_at(hi)) bg.grad.push_back({order[hi], 0.5});
  }
  return bg;
}

struct WindowResult {
  double y = 0, x = 0, weight = 0;
  std::vector<std::size_t> support;  // pixels with positive weight
};

WindowResult centroid(const Plane& p, std::size_t py, std::size_t px, double bg, int half) {
  WindowResult r;
  const long h = static_cast<long>(p.height), w = static_cast<long>(p.width);
  double sy = 0, sx = 0;
  for (long y = std::max(0L, static_cast<long>(py) - half); y <= std::min(h - 1, static_cast<long>(py) + half); ++y) {
    for (long x = std::max(0L, static_cast<long>(px) - half); x <= std::min(w - 1, static_cast<long>(px) + half); ++x) {
      const std::size_t i = static_cast<std::size_t>(y * w + x);
      const double wt = p.v[i] - bg;
      if (wt <= 0) continue;
      r.support.push_back(i);
      r.weight += wt;
      sy += wt * static_cast<double>(y);
      sx += wt * static_cast<double>(x);
    }
  }
  if (r.weight > 0) {
    r.y = sy / r.weight;
    r.x = sx / r.weight;
  } else {
    r.y = static_cast<double>(py);
    r.x = static_cast<double>(px);
  }
  return r;
}

// Pushes the upstream gradient (gy, gx) on a centroid into dL and into the
// background, which then lands on the median pixel(s).
void centroid_backward(const WindowResult& c, const Plane& p, const Background& bg, double gy, double gx,
                       std::vector<double>& dl) {
  if (c.weight <= 0) return;
  double dbg = 0;
  for (std::size_t i : c.support) {
    const double y = static_cast<double>(i / p.width), x = static_cast<double>(i % p.width);
    const double d = (gy * (y - c.y) + gx * (x - c.x)) / c.weight;
    dl[i] += d;
    dbg -= d;
  }
  for (const auto& [i, w] : bg.grad) dl[i] += dbg * w;
}

Plane unit_luminance(const double* x, std::size_t c, std::size_t h, std::size_t w) {
  Plane p{h, w, std::vector<double>(h * w, 0.0)};
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) p.v[i] += 0.5 * (x[ch * h * w + i] + 1.0);
  for (double& v : p.v) v /= static_cast<double>(c);
  return p;
}

// Loss value; when `gin`/`gout` are given, also adds scale * dLoss/dx into them.
double astro_eval(const std::vector<double>& xin, const std::vector<double>& xout, const Shape& s,
                  const AstroLossOptions& opt, double scale, std::vector<double>* gin, std::vector<double>* gout) {
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3], per = c * h * w;
  const double diag = std::sqrt(static_cast<double>(h * h + w * w));
  double total = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const double* pin = xin.data() + b * per;
    const double* pout = xout.data() + b * per;

    double fi = 0, fo = 0;
    for (std::size_t i = 0; i < per; ++i) {
      fi += 0.5 * (pin[i] + 1.0);
      fo += 0.5 * (pout[i] + 1.0);
    }
    fi /= static_cast<double>(per);
    fo /= static_cast<double>(per);
    const double diff = fo - fi;
    total += std::abs(diff);

    const Plane lin = unit_luminance(pin, c, h, w), lout = unit_luminance(pout, c, h, w);
    const auto det_in = detect_peaks(lin, opt.max_peaks, opt.k_mad);
    const auto det_out = detect_peaks(lout, opt.max_peaks, opt.k_mad);
    const Background bg_in = median_with_grad(lin.v), bg_out = median_with_grad(lout.v);
    const std::size_t k = det_in.peaks.size();

    std::vector<double> dlin, dlout;
    if (gin) dlin.assign(h * w, 0.0);
    if (gout) dlout.assign(h * w, 0.0);
    double shift_sum = 0;
    for (const auto& pk : det_in.peaks) {
      std::size_t oy = pk.y, ox = pk.x;
      double best = -1;
      for (const auto& q : det_out.peaks) {
        const double dy = static_cast<double>(q.y) - static_cast<double>(pk.y);
        const double dx = static_cast<double>(q.x) - static_cast<double>(pk.x);
        const double d2 = dy * dy + dx * dx;
        if (best < 0 || d2 < best) {
          best = d2;
          oy = q.y;
          ox = q.x;
        }
      }
      const auto ci = centroid(lin, pk.y, pk.x, bg_in.value, opt.window_half);
      const auto co = centroid(lout, oy, ox, bg_out.value, opt.window_half);
      const double dy = co.y - ci.y, dx = co.x - ci.x;
      const double dist = std::hypot(dy, dx);
      shift_sum += dist;
      if (dist > 0 && (gin || gout)) {
        const double coef = scale / (static_cast<double>(k) * diag * dist);
        if (gout) centroid_backward(co, lout, bg_out, coef * dy, coef * dx, dlout);
        if (gin) centroid_backward(ci, lin, bg_in, -coef * dy, -coef * dx, dlin);
      }
    }
    if (k > 0) total += shift_sum / (static_cast<double>(k) * diag);

    const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    const double dflux = scale * sgn * 0.5 / static_cast<double>(per);
    const double dlum = 0.5 / static_cast<double>(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < h * w; ++i) {
        const std::size_t j = b * per + ch * h * w + i;
        if (gout) (*gout)[j] += dflux + dlum * dlout[i];
        if (gin) (*gin)[j] += -dflux + dlum * dlin[i];
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

template <typename T>
Var<T> astro_loss(Var<T> x_in, Var<T> x_out, const AstroLossOptions& options) {
  const Shape s = x_in.shape();
  if (s.size() != 4) throw ShapeError("input", "expected [N, C, H, W], got " + shape_str(s));
  if (x_out.shape() != s) throw ShapeError("output", shape_str(s) + " vs " + shape_str(x_out.shape()));
  if (options.max_peaks == 0) throw UsageError("astro loss needs max_peaks >= 1");

  const auto& vin = x_in.value().vec();
  const auto& vout = x_out.value().vec();
  const std::vector<double> din(vin.begin(), vin.end()), dout(vout.begin(), vout.end());
  const double value = astro_eval(din, dout, s, options, 0.0, nullptr, nullptr);

  Graph<T>& g = *x_in.graph();
  return g.record(Tensor<T>::scalar(static_cast<T>(value)), {x_in, x_out},
                  [x_in, x_out, s, options, din, dout](Graph<T>& gr, const Tensor<T>& grad_out) {
                    const bool need_in = gr.requires_grad(x_in), need_out = gr.requires_grad(x_out);
                    std::vector<double> gin, gout;
                    if (need_in) gin.assign(din.size(), 0.0);
                    if (need_out) gout.assign(dout.size(), 0.0);
                    astro_eval(din, dout, s, options, static_cast<double>(grad_out[0]) / static_cast<double>(s[0]),
                               need_in ? &gin : nullptr, need_out ? &gout : nullptr);
                    if (need_in) gr.accumulate(x_in, Tensor<T>(s, std::vector<T>(gin.begin(), gin.end())));
                    if (need_out) gr.accumulate(x_out, Tensor<T>(s, std::vector<T>(gout.begin(), gout.end())));
                  });
}

#define STRC_INSTANTIATE_LOSSES(T)                                      \
  template Var<T> adversarial_loss(Var<T>, bool);                       \
  template Var<T> cycle_loss(Var<T>, Var<T>);                           \
  template Var<T> astro_loss(Var<T>, Var<T>, const AstroLossOptions&);

STRC_INSTANTIATE_LOSSES(float)
STRC_INSTANTIATE_LOSSES(double)

}  // namespace strc
