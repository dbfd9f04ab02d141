#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "strc/tensor/tensor.hpp"

namespace strc {

/// Value domain of an Image: raw 8-bit scale, normalized [0,1], or the
/// generator's [-1,1].
enum class Domain { raw255, unit, model };

std::string_view domain_name(Domain d);
/// Parses "raw255", "unit" or "model"; throws ConfigError otherwise.
Domain parse_domain(std::string_view name);
double domain_min(Domain d);
double domain_max(Domain d);

/// Channel-major raster: data[(c * height + y) * width + x].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Domain domain = Domain::unit;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, Domain d, double fill = 0.0)
      : channels(c), height(h), width(w), domain(d), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

  std::size_t plane() const noexcept { return height * width; }
  bool empty() const noexcept { return data.empty(); }
  bool same_shape(const Image& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  /// Channel count in {1,3,4}, buffer size, and every value inside the
  /// declared domain (with `slack` tolerance).
  void validate(double slack = 1e-9) const;

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.domain == b.domain && a.data == b.data;
  }
};

/// Affine map between domains.
Image normalize(const Image& image, Domain to);

/// Keeps channels [begin, end).
Image select_channels(const Image& image, std::size_t begin, std::size_t end);
/// Mean over channels, same domain.
Image luminance(const Image& image);

/// Bilinear resample to (height, width) with half-pixel centres and edge clamping.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
/// Box-filter downscale by an integer factor; dimensions must be divisible.
Image downscale_area(const Image& image, std::size_t factor);

template <typename T>
Tensor<T> to_tensor(const Image& image) {
  std::vector<T> v(image.data.begin(), image.data.end());
  return Tensor<T>(Shape{image.channels, image.height, image.width}, std::move(v));
}

/// Accepts [C,H,W] or [1,C,H,W].
template <typename T>
Image from_tensor(const Tensor<T>& t, Domain domain) {
  const auto& s = t.shape();
  const std::size_t off = s.size() == 4 ? 1 : 0;
  if (s.size() != 3 + off || (off && s[0] != 1)) throw ShapeError("image", "cannot view " + shape_str(s) + " as an image");
  Image img(s[off], s[off + 1], s[off + 2], domain);
  for (std::size_t i = 0; i < t.numel(); ++i) img.data[i] = static_cast<double>(t[i]);
  return img;
}

}  // namespace strc
