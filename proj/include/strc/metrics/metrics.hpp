#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "strc/dataset/image.hpp"

namespace strc {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
  static Matrix identity(std::size_t n);
  static Matrix diagonal(const std::vector<double>& d);

  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

// ---------------------------------------------------------------------------
// Features and Frechet distance

enum class FeatureMode { pixel_stats, fixed_random_conv };

std::string_view feature_mode_name(FeatureMode m);
FeatureMode parse_feature_mode(std::string_view name);

struct FeatureExtractorSpec {
  FeatureMode mode = FeatureMode::pixel_stats;
  std::uint64_t seed = 0;
};

/// pixel_stats: 2 + C + 16 entries per image (mean, std, per-channel means,
/// 4x4 average-pooled luminance grid). fixed_random_conv: two frozen seeded
/// conv (k3, tanh) + 2x2 average-pool stages (C -> 8 -> 16 channels),
/// adaptively pooled to 2x2, giving 64 entries.
std::size_t feature_dimension(const FeatureExtractorSpec& spec, std::size_t channels);

/// One row per image. Throws UsageError for an empty list, mixed shapes, or
/// images outside the unit domain.
Matrix extract_features(const std::vector<Image>& images, const FeatureExtractorSpec& spec);

struct FrechetStats {
  std::vector<double> mean;
  Matrix covariance;
  std::size_t count = 0;

  std::size_t dim() const noexcept { return mean.size(); }
};

/// Sample mean and unbiased covariance, symmetrized. Requires N >= 2.
FrechetStats fit_stats(const Matrix& features);

/// Symmetric PSD square root via eigendecomposition. Eigenvalues in
/// [-1e-8 * scale, 0) are clamped to 0; more negative ones, or an asymmetric
/// input, throw NumericError.
Matrix matrix_sqrt_psd(const Matrix& a);

/// |mu_a - mu_b|^2 + tr(A) + tr(B) - 2 tr((A^1/2 B A^1/2)^1/2).
double fid(const FrechetStats& a, const FrechetStats& b);

// ---------------------------------------------------------------------------
// Pixel metrics and morphology

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) on unit-domain images, capped at kPsnrCap.
double psnr(const Image& reference, const Image& candidate);

/// Single-channel view used for star measurements.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> v;

  double at(std::size_t y, std::size_t x) const { return v[y * width + x]; }
};

/// Mean over channels.
Plane luminance_plane(const Image& image);

double median(std::vector<double> values);

struct Peak {
  std::size_t y = 0;
  std::size_t x = 0;
  double value = 0;
};

struct PeakDetection {
  double background = 0;  ///< median
  double mad = 0;         ///< median absolute deviation (unscaled)
  double threshold = 0;   ///< background + k * mad
  std::vector<Peak> peaks;  ///< brightest first
};

/// Local maxima of the 3x3 neighbourhood strictly above the threshold.
/// Plateaus count once. `max_peaks` = 0 keeps all.
PeakDetection detect_peaks(const Plane& plane, std::size_t max_peaks = 5, double k_mad = 5.0);

struct Centroid {
  double y = 0;
  double x = 0;
  double weight = 0;  ///< sum of max(L - background, 0) over the window
};

/// Centroid weighted by max(L - background, 0) within the (2 half + 1)^2
/// window around (y, x), clipped to the image. A window with no positive
/// weight reports its centre.
Centroid window_centroid(const Plane& plane, std::size_t y, std::size_t x, double background, int half = 3);

/// Full width at half maximum from the background-subtracted radial profile
/// around (cy, cx); 0 if the profile never drops below half maximum.
double fwhm_radial(const Plane& plane, double cy, double cx, double background, double max_radius = 8.0);

struct StarMeasurement {
  Peak peak;
  Centroid centroid;
  double fwhm = 0;
};

struct Morphology {
  double total_flux = 0;  ///< sum of luminance
  PeakDetection detection;
  std::vector<StarMeasurement> stars;
};

Morphology morphology(const Image& image, std::size_t max_peaks = 5);

// ---------------------------------------------------------------------------
// Evaluation report

struct ReportRow {
  std::string model;
  std::string split;
  double fid = 0;
  double mean_psnr = 0;
  double peak_count_delta = 0;  ///< mean of (generated peaks - reference peaks)
};

inline constexpr const char* kReportHeader = "model,split,fid,mean_psnr,peak_count_delta";

std::string format_report(const std::vector<ReportRow>& rows);

}  // namespace strc
