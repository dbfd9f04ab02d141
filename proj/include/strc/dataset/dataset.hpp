#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "strc/dataset/image.hpp"

namespace strc {

// ---------------------------------------------------------------------------
// Cropping

struct BBox {
  long x = 0;  ///< top-left column
  long y = 0;  ///< top-left row
  std::size_t width = 0;
  std::size_t height = 0;
};

/// Parses four whitespace-separated integers: x y width height.
BBox parse_bbox(const std::string& text);
BBox read_bbox(const std::filesystem::path& path);

/// Square crop of `target_side` centred on the bbox centre; samples outside
/// the source are zero. A bbox larger than the target is cropped at its own
/// size and resized down. Throws UsageError if the bbox misses the image.
Image crop_and_pad(const Image& image, const BBox& bbox, std::size_t target_side);

// ---------------------------------------------------------------------------
// Object catalog

struct ObjectEntry {
  std::string name;
  double ra_deg = 0;
  double dec_deg = 0;
  bool paired = true;  ///< false: no ground-truth references (inference only)

  void validate() const;
};

/// One record per line: `name ra_deg dec_deg paired(0|1)`. Blank lines and
/// `#` comments are ignored.
std::vector<ObjectEntry> parse_catalog(const std::string& text);
std::vector<ObjectEntry> read_catalog(const std::filesystem::path& path);
std::string format_catalog(const std::vector<ObjectEntry>& entries);

// ---------------------------------------------------------------------------
// Synthetic star fields

struct DegradationRecipe {
  double blur_sigma = 1.0;   ///< <= 0 disables
  double noise_sigma = 0.02; ///< additive Gaussian, then clip to [0, 1]
  std::size_t downscale = 2; ///< 1 disables the down/up resampling
};

struct StarFieldSpec {
  std::size_t side = 32;
  std::size_t star_count = 6;
  double psf_sigma_min = 0.8;
  double psf_sigma_max = 1.6;
  double mag_min = 0.0;    ///< brightest magnitude; amplitude = 10^(-0.4 m)
  double mag_range = 2.5;
  double background = 0.05;
  double color_jitter = 0.1;
  double min_separation = 5.0;  ///< pixels between star centres (best effort)
  std::size_t channels = 3;
  bool nir = false;             ///< append a near-infrared band to the degraded frame
  DegradationRecipe recipe;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StarPosition {
  double x = 0, y = 0, sigma = 1, amplitude = 1;
};

struct StarFieldPair {
  Image clean;     ///< unit domain
  Image degraded;  ///< unit domain; 4 channels when spec.nir
  std::vector<StarPosition> stars;
};

/// clean = background + Gaussian PSFs (clipped to [0,1]); degraded = blur ->
/// noise -> downscale -> bilinear upscale of the clean frame.
StarFieldPair synth_starfield(const StarFieldSpec& spec);

// ---------------------------------------------------------------------------
// Manifest

enum class Role { mobil, groundtruth };
enum class Split { train, val, test };

std::string_view role_name(Role r);
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct ManifestEntry {
  std::string object;
  Split split = Split::train;
  Role role = Role::mobil;
  std::filesystem::path path;  ///< absolute
  std::string relative;        ///< relative to the root, '/'-separated
  bool paired = true;
};

struct ManifestOptions {
  std::uint64_t seed = 0;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  /// Objects flagged unpaired here keep their mobil frames but lose gt.
  std::vector<ObjectEntry> catalog;
};

struct Manifest {
  std::vector<ManifestEntry> entries;  ///< sorted by relative path
  std::vector<std::string> issues;     ///< non-fatal per-file problems

  std::vector<const ManifestEntry*> select(Role role, std::optional<Split> split = std::nullopt) const;
};

/// Scans `root/<object>/{mobil,gt}/*.ppm|pgm` (NIR siblings excluded).
/// Within each role, entries are ranked by a seeded hash of their relative
/// path; the first floor(n * train) go to train, the next floor(n * val) to
/// val, the rest to test. Throws IoError if the root does not exist.
Manifest build_manifest(const std::filesystem::path& root, const ManifestOptions& options = {});

/// Image files directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace strc
