#include "strc/dataset/codec.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>

namespace strc {
namespace fs = std::filesystem;

namespace {

struct Cursor {
  const Bytes& b;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < b.size()) {
      if (std::isspace(b[pos])) {
        ++pos;
      } else if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("netpbm header: expected a number");
    std::size_t v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos++] - '0');
      if (v > (1u << 28)) throw FormatError("netpbm header: value too large");
    }
    return v;
  }
};

Image decode_png(const Bytes& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError(std::string("png: ") + img.message);
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError(std::string("png: ") + img.message);
  }
  const std::size_t c = gray ? 1 : 3;
  Image out(c, img.height, img.width, Domain::raw255);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      for (std::size_t k = 0; k < c; ++k) out.at(k, y, x) = buf[(y * out.width + x) * c + k];
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(const Bytes& bytes) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> pixels;
  std::size_t w = 0, h = 0, c = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError("jpeg: corrupt payload");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = cinfo.output_width;
  h = cinfo.output_height;
  c = static_cast<std::size_t>(cinfo.output_components);
  pixels.resize(w * h * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  Image out(c, h, w, Domain::raw255);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) out.at(k, y, x) = pixels[(y * w + x) * c + k];
  return out;
}

}  // namespace

Image decode_netpbm(const Bytes& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary PGM/PPM payload");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  Cursor cur{bytes, 2};
  const std::size_t w = cur.number(), h = cur.number(), maxval = cur.number();
  if (w == 0 || h == 0) throw FormatError("netpbm: zero dimension");
  if (maxval == 0 || maxval > 65535) throw FormatError("netpbm: maxval out of range");
  if (cur.pos >= bytes.size() || !std::isspace(bytes[cur.pos])) throw FormatError("netpbm: malformed header");
  ++cur.pos;
  const std::size_t bps = maxval > 255 ? 2 : 1;
  if (bytes.size() - cur.pos < w * h * channels * bps) throw FormatError("netpbm: truncated pixel data");
  Image img(channels, h, w, Domain::raw255);
  const double scale = 255.0 / static_cast<double>(maxval);
  const std::uint8_t* p = bytes.data() + cur.pos;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = ((y * w + x) * channels + c) * bps;
        const unsigned v = bps == 2 ? (unsigned(p[i]) << 8) | p[i + 1] : p[i];
        img.at(c, y, x) = maxval == 255 ? static_cast<double>(v) : static_cast<double>(v) * scale;
      }
  return img;
}

Bytes encode_netpbm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("channels", "netpbm encodes 1 or 3 channels, got " + std::to_string(image.channels));
  }
  const Image raw = normalize(image, Domain::raw255);
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(raw.width) + " " +
                             std::to_string(raw.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(out.size() + raw.data.size());
  for (std::size_t y = 0; y < raw.height; ++y)
    for (std::size_t x = 0; x < raw.width; ++x)
      for (std::size_t c = 0; c < raw.channels; ++c) {
        const double v = std::clamp(std::round(raw.at(c, y, x)), 0.0, 255.0);
        out.push_back(static_cast<std::uint8_t>(v));
      }
  return out;
}

Image decode_image(const Bytes& bytes) {
  static const std::uint8_t png_sig[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(png_sig, png_sig + 4, bytes.begin())) return decode_png(bytes);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return decode_jpeg(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return decode_netpbm(bytes);
  throw FormatError("unrecognized image payload");
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return b;
}

void write_file(const fs::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

fs::path nir_sibling(const fs::path& path) {
  return path.parent_path() / (path.stem().string() + "_nir.pgm");
}

bool is_image_file(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext != ".ppm" && ext != ".pgm") return false;
  const auto stem = path.stem().string();
  return !(stem.size() >= 4 && stem.compare(stem.size() - 4, 4, "_nir") == 0);
}

Image read_image(const fs::path& path) {
  Image img = decode_netpbm(read_file(path));
  const auto nir = nir_sibling(path);
  if (img.channels == 3 && fs::exists(nir)) {
    Image band = decode_netpbm(read_file(nir));
    if (band.channels != 1 || band.height != img.height || band.width != img.width) {
      throw FormatError("NIR sibling " + nir.string() + " does not match " + path.string());
    }
    Image fused(4, img.height, img.width, Domain::raw255);
    std::copy(img.data.begin(), img.data.end(), fused.data.begin());
    std::copy(band.data.begin(), band.data.end(), fused.data.begin() + static_cast<long>(3 * img.plane()));
    return fused;
  }
  return img;
}

void write_image(const fs::path& path, const Image& image) {
  if (image.channels == 4) {
    write_file(path, encode_netpbm(select_channels(image, 0, 3)));
    write_file(nir_sibling(path), encode_netpbm(select_channels(image, 3, 4)));
    return;
  }
  write_file(path, encode_netpbm(image));
}

}  // namespace strc
