#include "strc/dataset/image.hpp"

#include <algorithm>
#include <cmath>

namespace strc {

std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::raw255: return "raw255";
    case Domain::unit: return "unit";
    case Domain::model: return "model";
  }
  return "unknown";
}

Domain parse_domain(std::string_view name) {
  if (name == "raw255") return Domain::raw255;
  if (name == "unit") return Domain::unit;
  if (name == "model") return Domain::model;
  throw ConfigError("unknown domain tag '" + std::string(name) + "'");
}

double domain_min(Domain d) { return d == Domain::model ? -1.0 : 0.0; }
double domain_max(Domain d) { return d == Domain::raw255 ? 255.0 : 1.0; }

void Image::validate(double slack) const {
  if (channels != 1 && channels != 3 && channels != 4) {
    throw ShapeError("channels", "image channels must be 1, 3 or 4, got " + std::to_string(channels));
  }
  if (data.size() != channels * height * width) throw ShapeError("data", "buffer does not match dimensions");
  const double lo = domain_min(domain) - slack, hi = domain_max(domain) + slack;
  for (double v : data) {
    if (!(v >= lo && v <= hi)) {
      throw UsageError("pixel value " + std::to_string(v) + " outside " + std::string(domain_name(domain)) + " domain");
    }
  }
}

Image normalize(const Image& image, Domain to) {
  if (image.domain == to) return image;
  // Map through unit scale: unit = (v - min) / (max - min).
  const double smin = domain_min(image.domain), sspan = domain_max(image.domain) - smin;
  const double tmin = domain_min(to), tspan = domain_max(to) - tmin;
  Image out = image;
  out.domain = to;
  for (double& v : out.data) v = (v - smin) / sspan * tspan + tmin;
  return out;
}

Image select_channels(const Image& image, std::size_t begin, std::size_t end) {
  if (begin >= end || end > image.channels) throw ShapeError("channels", "invalid channel range");
  Image out(end - begin, image.height, image.width, image.domain);
  std::copy(image.data.begin() + static_cast<long>(begin * image.plane()),
            image.data.begin() + static_cast<long>(end * image.plane()), out.data.begin());
  return out;
}

Image luminance(const Image& image) {
  Image out(1, image.height, image.width, image.domain);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t i = 0; i < image.plane(); ++i) out.data[i] += image.data[c * image.plane() + i];
  for (double& v : out.data) v /= static_cast<double>(image.channels);
  return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (image.empty() || height == 0 || width == 0) throw UsageError("resize of an empty image");
  if (height == image.height && width == image.width) return image;
  Image out(image.channels, height, width, image.domain);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = image.at(c, y0, x0) * (1 - wx) + image.at(c, y0, x1) * wx;
        const double bot = image.at(c, y1, x0) * (1 - wx) + image.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Image downscale_area(const Image& image, std::size_t factor) {
  if (factor == 0) throw UsageError("downscale factor must be >= 1");
  if (factor == 1) return image;
  if (image.height % factor || image.width % factor) {
    throw ShapeError("size", "image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                                 " not divisible by downscale factor " + std::to_string(factor));
  }
  Image out(image.channels, image.height / factor, image.width / factor, image.domain);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = 0; x < out.width; ++x) {
        double s = 0;
        for (std::size_t i = 0; i < factor; ++i)
          for (std::size_t j = 0; j < factor; ++j) s += image.at(c, y * factor + i, x * factor + j);
        out.at(c, y, x) = s * inv;
      }
  return out;
}

}  // namespace strc
