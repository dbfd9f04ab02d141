#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "strc/dataset/image.hpp"

namespace strc {

/// Discretized isotropic Gaussian on a (2k+1)x(2k+1) grid, indexed
/// value(i, j) for i, j in [-k, k].
struct GaussianKernel {
  double sigma = 1.0;
  int radius = 1;
  bool normalized = false;
  std::vector<double> values;

  int side() const noexcept { return 2 * radius + 1; }
  double value(int i, int j) const { return values[static_cast<std::size_t>((i + radius) * side() + (j + radius))]; }
};

/// G(i,j) = exp(-(i^2 + j^2) / (2 sigma^2)) / (2 pi sigma^2), optionally
/// divided by its sum. Throws UsageError for sigma <= 0 or k < 1.
GaussianKernel gaussian_kernel(double sigma, int radius, bool normalize);

/// Radius used when none is given: ceil(3 sigma), at least 1.
int default_blur_radius(double sigma);

/// Weighted neighbourhood sum with a normalized kernel. Borders are
/// mirrored including the edge pixel (-1 -> 0, -2 -> 1), which keeps the
/// total flux unchanged. radius <= 0 selects default_blur_radius(sigma).
Image gaussian_blur(const Image& image, double sigma, int radius = 0);

struct SkyGlowParams {
  double sigma_glow = 0.05;
  std::uint64_t seed = 0;
};

/// clip(I + N, 0, 1) with N ~ Normal(0, sigma_glow^2) per pixel and channel.
Image sky_glow(const Image& image, const SkyGlowParams& params);

/// Horizontal flip (when `flip`) followed by a counter-clockwise rotation by
/// `quarter_turns` * 90 degrees. Exact pixel permutation.
Image dihedral(const Image& image, int quarter_turns, bool flip);

/// Multiply by `factor` then clip to [0, 1].
Image brightness(const Image& image, double factor);

/// Bilinear zoom about the image centre, same output shape. factor < 1
/// shrinks the content and leaves a zero border; factor > 1 crops.
Image scale_zoom(const Image& image, double factor);

struct BrightnessParams {
  double base_mean = 0.9;
  double jitter_sigma = 0.05;
  int levels = 3;
};

struct VariantDescriptor {
  int quarter_turns = 0;
  bool flip = false;
  int brightness_level = 0;
  double scale = 1.0;
};

inline constexpr std::size_t kVariantsPerImage = 36;
inline constexpr std::array<double, 3> kZoomFactors{1.0, 0.8, 1.2};

struct AugmentPlan {
  std::vector<VariantDescriptor> variants;
  std::vector<double> brightness_factors;
  double blur_sigma = 1.0;  ///< <= 0 disables the turbulence blur
  SkyGlowParams glow;
  std::uint64_t seed = 0;
};

/// 4 rotations x 3 brightness levels x 3 zoom factors; odd-indexed variants
/// are flipped. Brightness factors are drawn from Normal(base_mean,
/// jitter_sigma^2) and clamped to (0, 2].
AugmentPlan make_augment_plan(std::uint64_t seed, const BrightnessParams& brightness = {}, double blur_sigma = 1.0,
                              double sigma_glow = 0.05);

/// Applies dihedral -> zoom -> brightness -> blur -> sky glow for each
/// variant. Input must be in the unit domain; throws UsageError unless the
/// plan has exactly 36 variants.
std::vector<Image> augment_all(const Image& image, const AugmentPlan& plan);

}  // namespace strc
