#include "strc/augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "strc/rng.hpp"

namespace strc {
namespace {

// Mirror including the edge sample, periodic with period 2n.
long mirror(long i, long n) {
  const long period = 2 * n;
  long m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

void require_unit(const Image& image, const char* op) {
  if (image.empty()) throw UsageError(std::string(op) + ": empty image");
  if (image.domain != Domain::unit) throw UsageError(std::string(op) + ": expects a unit-domain image");
}

double sample_bilinear(const Image& img, std::size_t c, double y, double x) {
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double wy = y - static_cast<double>(y0), wx = x - static_cast<double>(x0);
  const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
  const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
  return top * (1 - wy) + bot * wy;
}

Image rotate_ccw(const Image& in) {
  Image out(in.channels, in.width, in.height, in.domain);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t r = 0; r < out.height; ++r)
      for (std::size_t col = 0; col < out.width; ++col) out.at(c, r, col) = in.at(c, col, in.width - 1 - r);
  return out;
}

}  // namespace

GaussianKernel gaussian_kernel(double sigma, int radius, bool normalize) {
  if (!(sigma > 0)) throw UsageError("gaussian_kernel: sigma must be positive");
  if (radius < 1) throw UsageError("gaussian_kernel: radius must be >= 1");
  GaussianKernel k;
  k.sigma = sigma;
  k.radius = radius;
  k.normalized = normalize;
  k.values.resize(static_cast<std::size_t>(k.side() * k.side()));
  const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
  double total = 0;
  for (int i = -radius; i <= radius; ++i)
    for (int j = -radius; j <= radius; ++j) {
      const double v = norm * std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      k.values[static_cast<std::size_t>((i + radius) * k.side() + (j + radius))] = v;
      total += v;
    }
  if (normalize)
    for (double& v : k.values) v /= total;
  return k;
}

int default_blur_radius(double sigma) { return std::max(1, static_cast<int>(std::ceil(3.0 * sigma))); }

Image gaussian_blur(const Image& image, double sigma, int radius) {
  require_unit(image, "gaussian_blur");
  const int k = radius > 0 ? radius : default_blur_radius(sigma);
  const auto kernel = gaussian_kernel(sigma, k, true);
  Image out(image.channels, image.height, image.width, image.domain);
  const long H = static_cast<long>(image.height), W = static_cast<long>(image.width);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double acc = 0;
        for (int i = -k; i <= k; ++i) {
          const std::size_t sy = static_cast<std::size_t>(mirror(y + i, H));
          for (int j = -k; j <= k; ++j) {
            acc += image.at(c, sy, static_cast<std::size_t>(mirror(x + j, W))) * kernel.value(i, j);
          }
        }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = std::clamp(acc, 0.0, 1.0);
      }
  return out;
}

Image sky_glow(const Image& image, const SkyGlowParams& params) {
  require_unit(image, "sky_glow");
  if (params.sigma_glow < 0) throw UsageError("sky_glow: sigma_glow must be >= 0");
  if (params.sigma_glow == 0) return image;
  Rng rng(params.seed);
  Image out = image;
  for (double& v : out.data) v = std::clamp(v + rng.normal(0.0, params.sigma_glow), 0.0, 1.0);
  return out;
}

Image dihedral(const Image& image, int quarter_turns, bool flip) {
  Image out = image;
  if (flip) {
    for (std::size_t c = 0; c < image.channels; ++c)
      for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  }
  const int q = ((quarter_turns % 4) + 4) % 4;
  for (int i = 0; i < q; ++i) out = rotate_ccw(out);
  return out;
}

Image brightness(const Image& image, double factor) {
  if (!(factor > 0)) throw UsageError("brightness: factor must be positive");
  Image out = image;
  for (double& v : out.data) v = std::clamp(v * factor, 0.0, 1.0);
  return out;
}

Image scale_zoom(const Image& image, double factor) {
  if (!(factor > 0)) throw UsageError("scale_zoom: factor must be positive");
  if (factor == 1.0) return image;
  Image out(image.channels, image.height, image.width, image.domain);
  const double cy = (static_cast<double>(image.height) - 1) / 2, cx = (static_cast<double>(image.width) - 1) / 2;
  const double ymax = static_cast<double>(image.height - 1), xmax = static_cast<double>(image.width - 1);
  constexpr double tol = 1e-9;
  for (std::size_t y = 0; y < image.height; ++y) {
    const double sy = cy + (static_cast<double>(y) - cy) / factor;
    if (sy < -tol || sy > ymax + tol) continue;
    for (std::size_t x = 0; x < image.width; ++x) {
      const double sx = cx + (static_cast<double>(x) - cx) / factor;
      if (sx < -tol || sx > xmax + tol) continue;
      for (std::size_t c = 0; c < image.channels; ++c)
        out.at(c, y, x) = sample_bilinear(image, c, std::clamp(sy, 0.0, ymax), std::clamp(sx, 0.0, xmax));
    }
  }
  return out;
}

AugmentPlan make_augment_plan(std::uint64_t seed, const BrightnessParams& brightness, double blur_sigma,
                              double sigma_glow) {
  if (brightness.levels != 3) throw UsageError("augment plan uses exactly 3 brightness levels");
  AugmentPlan plan;
  plan.seed = seed;
  plan.blur_sigma = blur_sigma;
  plan.glow = SkyGlowParams{sigma_glow, derive_seed(seed, "sky_glow")};
  Rng rng(derive_seed(seed, "brightness"));
  for (int l = 0; l < brightness.levels; ++l) {
    const double f = brightness.base_mean + brightness.jitter_sigma * rng.normal();
    plan.brightness_factors.push_back(std::clamp(f, 1e-6, 2.0));
  }
  for (int rot = 0; rot < 4; ++rot)
    for (int level = 0; level < 3; ++level)
      for (double zoom : kZoomFactors) {
        VariantDescriptor v;
        v.quarter_turns = rot;
        v.brightness_level = level;
        v.scale = zoom;
        v.flip = plan.variants.size() % 2 == 1;
        plan.variants.push_back(v);
      }
  return plan;
}

std::vector<Image> augment_all(const Image& image, const AugmentPlan& plan) {
  require_unit(image, "augment_all");
  if (plan.variants.size() != kVariantsPerImage) {
    throw UsageError("augment plan must hold exactly 36 variants, got " + std::to_string(plan.variants.size()));
  }
  std::vector<Image> out;
  out.reserve(kVariantsPerImage);
  for (std::size_t i = 0; i < plan.variants.size(); ++i) {
    const auto& v = plan.variants[i];
    if (v.brightness_level < 0 || static_cast<std::size_t>(v.brightness_level) >= plan.brightness_factors.size()) {
      throw UsageError("variant " + std::to_string(i) + " references a missing brightness level");
    }
    Image img = dihedral(image, v.quarter_turns, v.flip);
    img = scale_zoom(img, v.scale);
    img = brightness(img, plan.brightness_factors[static_cast<std::size_t>(v.brightness_level)]);
    if (plan.blur_sigma > 0) img = gaussian_blur(img, plan.blur_sigma);
    img = sky_glow(img, SkyGlowParams{plan.glow.sigma_glow, derive_seed(plan.glow.seed, i)});
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace strc
