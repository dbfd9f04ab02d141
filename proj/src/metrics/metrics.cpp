#include "strc/metrics/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "strc/rng.hpp"
#include "strc/tensor/functional.hpp"

namespace strc {

namespace {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

EMatrix to_eigen(const Matrix& m) {
  EMatrix e(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) e(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
  return e;
}

Matrix from_eigen(const EMatrix& e) {
  Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = e(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return m;
}

void check_images(const std::vector<Image>& images) {
  if (images.empty()) throw UsageError("extract_features: empty image list");
  for (const auto& img : images) {
    if (!img.same_shape(images.front())) throw ShapeError("image", "extract_features: images differ in shape");
    if (img.domain != Domain::unit) throw UsageError("extract_features: images must be in the unit domain");
  }
}

// Average of the block [y0, y1) x [x0, x1).
double block_mean(const Image& img, std::size_t c, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
  double s = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) s += img.at(c, y, x);
  return s / static_cast<double>((y1 - y0) * (x1 - x0));
}

// Adaptive bin edges: bin i covers [floor(i n / k), ceil((i + 1) n / k)).
std::pair<std::size_t, std::size_t> bin(std::size_t i, std::size_t n, std::size_t k) {
  const std::size_t lo = i * n / k;
  const std::size_t hi = std::max(lo + 1, ((i + 1) * n + k - 1) / k);
  return {lo, std::min(hi, n)};
}

std::vector<double> pixel_stats(const Image& img) {
  std::vector<double> f;
  double mean = 0;
  for (double v : img.data) mean += v;
  mean /= static_cast<double>(img.data.size());
  double var = 0;
  for (double v : img.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(img.data.size());
  f.push_back(mean);
  f.push_back(std::sqrt(var));
  for (std::size_t c = 0; c < img.channels; ++c) f.push_back(block_mean(img, c, 0, img.height, 0, img.width));
  const Image lum = luminance(img);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const auto [y0, y1] = bin(i, img.height, 4);
      const auto [x0, x1] = bin(j, img.width, 4);
      f.push_back(block_mean(lum, 0, y0, y1, x0, x1));
    }
  return f;
}

struct FrozenConv {
  ConvSpec spec;
  Tensor<double> weight, bias;
};

FrozenConv frozen_conv(std::size_t cin, std::size_t cout, Rng& rng) {
  FrozenConv l{ConvSpec::conv2d(cin, cout, 3, 1, 1), {}, {}};
  l.weight = Tensor<double>(l.spec.weight_shape());
  const double sd = 1.0 / std::sqrt(static_cast<double>(cin * 9));
  for (auto& v : l.weight.data()) v = rng.normal(0.0, sd);
  l.bias = Tensor<double>(Shape{cout});
  for (auto& v : l.bias.data()) v = rng.normal(0.0, 0.1);
  return l;
}

// Average pool [C, H, W] to [C, oh, ow] with adaptive bins.
Tensor<double> adaptive_pool(const Tensor<double>& t, std::size_t oh, std::size_t ow) {
  const std::size_t C = t.dim(0), H = t.dim(1), W = t.dim(2);
  Tensor<double> out(Shape{C, oh, ow}, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const auto [y0, y1] = bin(i, H, oh);
        const auto [x0, x1] = bin(j, W, ow);
        double s = 0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) s += t[(c * H + y) * W + x];
        out[(c * oh + i) * ow + j] = s / static_cast<double>((y1 - y0) * (x1 - x0));
      }
  return out;
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(const std::vector<double>& d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matrix", "matmul dimension mismatch");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k)
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += a(i, k) * b(k, j);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("matrix", "max_abs_diff shape mismatch");
  double m = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

std::string_view feature_mode_name(FeatureMode m) {
  return m == FeatureMode::pixel_stats ? "pixel_stats" : "fixed_random_conv";
}

FeatureMode parse_feature_mode(std::string_view name) {
  if (name == "pixel_stats") return FeatureMode::pixel_stats;
  if (name == "fixed_random_conv") return FeatureMode::fixed_random_conv;
  throw ConfigError("unknown feature mode '" + std::string(name) + "'");
}

std::size_t feature_dimension(const FeatureExtractorSpec& spec, std::size_t channels) {
  return spec.mode == FeatureMode::pixel_stats ? 2 + channels + 16 : 64;
}

Matrix extract_features(const std::vector<Image>& images, const FeatureExtractorSpec& spec) {
  check_images(images);
  const std::size_t C = images.front().channels;
  const std::size_t D = feature_dimension(spec, C);
  Matrix out(images.size(), D);
  if (spec.mode == FeatureMode::pixel_stats) {
    for (std::size_t n = 0; n < images.size(); ++n) {
      const auto f = pixel_stats(images[n]);
      std::copy(f.begin(), f.end(), out.v.begin() + static_cast<long>(n * D));
    }
    return out;
  }
  if (images.front().height < 4 || images.front().width < 4) throw ShapeError("spatial", "fixed_random_conv needs >= 4x4");
  Rng rng(derive_seed(spec.seed, "fid_features"));
  const auto l1 = frozen_conv(C, 8, rng);
  const auto l2 = frozen_conv(8, 16, rng);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = images[n];
    auto h = activation(conv_forward(to_tensor<double>(img), l1.spec, l1.weight, l1.bias), Activation::tanh());
    h = adaptive_pool(h, std::max<std::size_t>(2, img.height / 2), std::max<std::size_t>(2, img.width / 2));
    h = activation(conv_forward(h, l2.spec, l2.weight, l2.bias), Activation::tanh());
    h = adaptive_pool(h, 2, 2);
    std::copy(h.vec().begin(), h.vec().end(), out.v.begin() + static_cast<long>(n * D));
  }
  return out;
}

FrechetStats fit_stats(const Matrix& features) {
  if (features.rows < 2) throw UsageError("fit_stats needs at least two samples");
  const std::size_t N = features.rows, D = features.cols;
  FrechetStats s;
  s.count = N;
  s.mean.assign(D, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t d = 0; d < D; ++d) s.mean[d] += features(n, d);
  for (double& m : s.mean) m /= static_cast<double>(N);
  s.covariance = Matrix(D, D);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < D; ++i) {
      const double di = features(n, i) - s.mean[i];
      for (std::size_t j = 0; j < D; ++j) s.covariance(i, j) += di * (features(n, j) - s.mean[j]);
    }
  for (double& v : s.covariance.v) v /= static_cast<double>(N - 1);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = i + 1; j < D; ++j) {
      const double avg = 0.5 * (s.covariance(i, j) + s.covariance(j, i));
      s.covariance(i, j) = s.covariance(j, i) = avg;
    }
  return s;
}

Matrix matrix_sqrt_psd(const Matrix& a) {
  if (a.rows != a.cols) throw ShapeError("matrix", "matrix_sqrt_psd needs a square matrix");
  double scale = 1.0;
  for (double v : a.v) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = i + 1; j < a.cols; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale) throw NumericError("matrix_sqrt_psd: input is not symmetric");

  Eigen::SelfAdjointEigenSolver<EMatrix> solver(to_eigen(a));
  if (solver.info() != Eigen::Success) throw NumericError("matrix_sqrt_psd: eigendecomposition failed");
  Eigen::VectorXd lambda = solver.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -1e-8 * scale) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "matrix_sqrt_psd: eigenvalue %.3g is strongly negative", lambda(i));
      throw NumericError(buf);
    }
    lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
  }
  const auto& V = solver.eigenvectors();
  EMatrix s = V * lambda.asDiagonal() * V.transpose();
  s = 0.5 * (s + s.transpose()).eval();
  return from_eigen(s);
}

double fid(const FrechetStats& a, const FrechetStats& b) {
  if (a.dim() != b.dim()) throw ShapeError("dimension", "fid: feature dimensions differ");
  double mean_term = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  const Matrix ra = matrix_sqrt_psd(a.covariance);
  Matrix cross = matmul(matmul(ra, b.covariance), ra);
  for (std::size_t i = 0; i < cross.rows; ++i)
    for (std::size_t j = i + 1; j < cross.cols; ++j) {
      const double avg = 0.5 * (cross(i, j) + cross(j, i));
      cross(i, j) = cross(j, i) = avg;
    }
  const Matrix root = matrix_sqrt_psd(cross);
  double trace = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) trace += a.covariance(i, i) + b.covariance(i, i) - 2.0 * root(i, i);
  if (trace < 0 && trace > -1e-6) trace = 0;
  const double d = mean_term + trace;
  if (d < 0) throw NumericError("fid: negative distance");
  return d;
}

double psnr(const Image& reference, const Image& candidate) {
  if (!reference.same_shape(candidate)) throw ShapeError("image", "psnr: shape mismatch");
  if (reference.domain != Domain::unit || candidate.domain != Domain::unit) {
    throw UsageError("psnr: images must be in the unit domain");
  }
  double mse = 0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    const double d = reference.data[i] - candidate.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(reference.data.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

Plane luminance_plane(const Image& image) {
  const Image lum = luminance(image);
  return Plane{lum.height, lum.width, lum.data};
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<long>(mid));
  return 0.5 * (lo + hi);
}

PeakDetection detect_peaks(const Plane& plane, std::size_t max_peaks, double k_mad) {
  PeakDetection d;
  d.background = median(plane.v);
  std::vector<double> dev(plane.v.size());
  for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = std::abs(plane.v[i] - d.background);
  d.mad = median(std::move(dev));
  d.threshold = d.background + k_mad * d.mad;
  const long H = static_cast<long>(plane.height), W = static_cast<long>(plane.width);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      const double v = plane.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      if (!(v > d.threshold)) continue;
      bool peak = true;
      for (long dy = -1; dy <= 1 && peak; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          if (!dy && !dx) continue;
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          const double n = plane.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          // Earlier raster neighbours must be strictly lower so a plateau counts once.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > v || (earlier && n == v)) {
            peak = false;
            break;
          }
        }
      if (peak) d.peaks.push_back({static_cast<std::size_t>(y), static_cast<std::size_t>(x), v});
    }
  std::stable_sort(d.peaks.begin(), d.peaks.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
  if (max_peaks && d.peaks.size() > max_peaks) d.peaks.resize(max_peaks);
  return d;
}

Centroid window_centroid(const Plane& plane, std::size_t y, std::size_t x, double background, int half) {
  Centroid c{static_cast<double>(y), static_cast<double>(x), 0.0};
  const long H = static_cast<long>(plane.height), W = static_cast<long>(plane.width);
  double sy = 0, sx = 0;
  for (long yy = std::max(0L, static_cast<long>(y) - half); yy <= std::min(H - 1, static_cast<long>(y) + half); ++yy)
    for (long xx = std::max(0L, static_cast<long>(x) - half); xx <= std::min(W - 1, static_cast<long>(x) + half); ++xx) {
      const double w = std::max(plane.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) - background, 0.0);
      c.weight += w;
      sy += w * static_cast<double>(yy);
      sx += w * static_cast<double>(xx);
    }
  if (c.weight > 0) {
    c.y = sy / c.weight;
    c.x = sx / c.weight;
  }
  return c;
}

double fwhm_radial(const Plane& plane, double cy, double cx, double background, double max_radius) {
  // Profile in unit-width radius bins; each bin reports its mean radius and level.
  const auto nbins = static_cast<std::size_t>(std::ceil(max_radius)) + 1;
  std::vector<double> sum_r(nbins, 0.0), sum_v(nbins, 0.0), count(nbins, 0.0);
  for (std::size_t y = 0; y < plane.height; ++y)
    for (std::size_t x = 0; x < plane.width; ++x) {
      const double r = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
      if (r > max_radius) continue;
      const auto b = static_cast<std::size_t>(std::floor(r + 0.5));
      if (b >= nbins) continue;
      sum_r[b] += r;
      sum_v[b] += plane.at(y, x) - background;
      count[b] += 1;
    }
  std::vector<std::pair<double, double>> profile;
  for (std::size_t b = 0; b < nbins; ++b)
    if (count[b] > 0) profile.emplace_back(sum_r[b] / count[b], sum_v[b] / count[b]);
  if (profile.empty()) return 0.0;
  // Peak level from the innermost bin.
  const double peak = profile.front().second;
  if (!(peak > 0)) return 0.0;
  const double half_max = 0.5 * peak;
  for (std::size_t i = 1; i < profile.size(); ++i) {
    if (profile[i].second <= half_max) {
      const auto [r0, v0] = profile[i - 1];
      const auto [r1, v1] = profile[i];
      const double t = v0 == v1 ? 0.0 : (v0 - half_max) / (v0 - v1);
      return 2.0 * (r0 + t * (r1 - r0));
    }
  }
  return 0.0;
}

Morphology morphology(const Image& image, std::size_t max_peaks) {
  Morphology m;
  const Plane plane = luminance_plane(image);
  for (double v : plane.v) m.total_flux += v;
  m.detection = detect_peaks(plane, max_peaks);
  for (const auto& p : m.detection.peaks) {
    StarMeasurement s;
    s.peak = p;
    s.centroid = window_centroid(plane, p.y, p.x, m.detection.background);
    s.fwhm = fwhm_radial(plane, s.centroid.y, s.centroid.x, m.detection.background);
    m.stars.push_back(s);
  }
  return m;
}

std::string format_report(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kReportHeader) + "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f\n", r.model.c_str(), r.split.c_str(), r.fid, r.mean_psnr,
                  r.peak_count_delta);
    out += buf;
  }
  return out;
}

}  // namespace strc
