#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "strc/dataset/image.hpp"

namespace strc {

using Bytes = std::vector<std::uint8_t>;

/// Binary PGM (P5) / PPM (P6). Maxval up to 65535; 16-bit samples are
/// big-endian. Decoded images are in the raw255 domain.
Image decode_netpbm(const Bytes& bytes);
/// 8-bit P5 for one channel, P6 for three. Values are converted to raw255,
/// rounded and clamped.
Bytes encode_netpbm(const Image& image);

/// Sniffs the payload: netpbm, PNG or JPEG. Alpha channels are dropped.
/// Throws FormatError on anything else.
Image decode_image(const Bytes& bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);

/// Reads `<stem>.ppm|.pgm`; if a `<stem>_nir.pgm` sibling exists it is
/// appended as a fourth channel.
Image read_image(const std::filesystem::path& path);
/// Writes channels 0..2 (or 0) to `path`; a fourth channel goes to the
/// `_nir.pgm` sibling.
void write_image(const std::filesystem::path& path, const Image& image);

/// `<dir>/<stem>_nir.pgm` for `<dir>/<stem>.<ext>`.
std::filesystem::path nir_sibling(const std::filesystem::path& path);
bool is_image_file(const std::filesystem::path& path);

}  // namespace strc
