#include "strc/dataset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "strc/augment/augment.hpp"
#include "strc/dataset/codec.hpp"
#include "strc/rng.hpp"

namespace strc {
namespace fs = std::filesystem;

BBox parse_bbox(const std::string& text) {
  std::istringstream in(text);
  long x, y, w, h;
  if (!(in >> x >> y >> w >> h)) throw FormatError("bbox: expected four integers 'x y width height'");
  if (w <= 0 || h <= 0) throw FormatError("bbox: width and height must be positive");
  return BBox{x, y, static_cast<std::size_t>(w), static_cast<std::size_t>(h)};
}

BBox read_bbox(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_bbox(std::string(bytes.begin(), bytes.end()));
}

Image crop_and_pad(const Image& image, const BBox& bbox, std::size_t target_side) {
  if (target_side == 0) throw UsageError("crop_and_pad: target side must be positive");
  if (bbox.width == 0 || bbox.height == 0) throw UsageError("crop_and_pad: empty bbox");
  const long W = static_cast<long>(image.width), H = static_cast<long>(image.height);
  const long bw = static_cast<long>(bbox.width), bh = static_cast<long>(bbox.height);
  if (bbox.x >= W || bbox.y >= H || bbox.x + bw <= 0 || bbox.y + bh <= 0) {
    throw UsageError("crop_and_pad: bbox lies entirely outside the image");
  }
  const long side = std::max({static_cast<long>(target_side), bw, bh});
  const long cx = bbox.x + bw / 2, cy = bbox.y + bh / 2;
  const long left = cx - side / 2, top = cy - side / 2;
  Image out(image.channels, static_cast<std::size_t>(side), static_cast<std::size_t>(side), image.domain, 0.0);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (long r = 0; r < side; ++r) {
      const long sy = top + r;
      if (sy < 0 || sy >= H) continue;
      for (long q = 0; q < side; ++q) {
        const long sx = left + q;
        if (sx < 0 || sx >= W) continue;
        out.at(c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)) =
            image.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  if (static_cast<std::size_t>(side) != target_side) return resize_bilinear(out, target_side, target_side);
  return out;
}

void ObjectEntry::validate() const {
  if (name.empty()) throw ConfigError("catalog entry without a name");
  if (!(ra_deg >= 0 && ra_deg < 360)) throw ConfigError(name + ": ra must be in [0, 360)");
  if (!(dec_deg >= -90 && dec_deg <= 90)) throw ConfigError(name + ": dec must be in [-90, 90]");
}

std::vector<ObjectEntry> parse_catalog(const std::string& text) {
  std::vector<ObjectEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    ObjectEntry e;
    int paired = 1;
    if (!(ls >> e.name)) continue;
    if (!(ls >> e.ra_deg >> e.dec_deg >> paired)) {
      throw ConfigError("catalog line " + std::to_string(lineno) + ": expected 'name ra dec paired'");
    }
    e.paired = paired != 0;
    e.validate();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ObjectEntry> read_catalog(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("catalog not found: " + path.string());
  const auto bytes = read_file(path);
  return parse_catalog(std::string(bytes.begin(), bytes.end()));
}

std::string format_catalog(const std::vector<ObjectEntry>& entries) {
  std::ostringstream out;
  out.precision(10);
  for (const auto& e : entries) out << e.name << ' ' << e.ra_deg << ' ' << e.dec_deg << ' ' << (e.paired ? 1 : 0) << '\n';
  return out.str();
}

void StarFieldSpec::validate() const {
  if (side < 16) throw ConfigError("star field side must be >= 16");
  if (star_count < 1) throw ConfigError("star field needs at least one star");
  if (!(psf_sigma_min > 0) || psf_sigma_max < psf_sigma_min) throw ConfigError("invalid PSF sigma range");
  if (channels != 1 && channels != 3) throw ConfigError("star field channels must be 1 or 3");
  if (recipe.downscale == 0 || side % recipe.downscale) throw ConfigError("side must be divisible by downscale");
  if (recipe.noise_sigma < 0) throw ConfigError("noise sigma must be >= 0");
}

StarFieldPair synth_starfield(const StarFieldSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "starfield"));
  const double margin = 2.0, hi = static_cast<double>(spec.side) - 1.0 - margin;
  StarFieldPair pair;
  for (std::size_t s = 0; s < spec.star_count; ++s) {
    StarPosition p;
    for (int attempt = 0; attempt < 200; ++attempt) {
      p.x = rng.uniform(margin, hi);
      p.y = rng.uniform(margin, hi);
      const bool clear = std::all_of(pair.stars.begin(), pair.stars.end(), [&](const StarPosition& q) {
        return std::hypot(q.x - p.x, q.y - p.y) >= spec.min_separation;
      });
      if (clear) break;
    }
    p.sigma = rng.uniform(spec.psf_sigma_min, spec.psf_sigma_max);
    p.amplitude = std::pow(10.0, -0.4 * rng.uniform(spec.mag_min, spec.mag_min + spec.mag_range));
    pair.stars.push_back(p);
  }

  Image clean(spec.channels, spec.side, spec.side, Domain::unit, spec.background);
  for (const auto& star : pair.stars) {
    std::vector<double> tint(spec.channels, 1.0);
    if (spec.channels == 3)
      for (double& t : tint) t = std::clamp(1.0 + spec.color_jitter * rng.normal(), 0.5, 1.5);
    const double inv = 1.0 / (2.0 * star.sigma * star.sigma);
    for (std::size_t y = 0; y < spec.side; ++y)
      for (std::size_t x = 0; x < spec.side; ++x) {
        const double dx = static_cast<double>(x) - star.x, dy = static_cast<double>(y) - star.y;
        const double v = star.amplitude * std::exp(-(dx * dx + dy * dy) * inv);
        for (std::size_t c = 0; c < spec.channels; ++c) clean.at(c, y, x) += v * tint[c];
      }
  }
  for (double& v : clean.data) v = std::clamp(v, 0.0, 1.0);

  auto degrade = [&](const Image& src, double blur_sigma, std::uint64_t noise_seed) {
    Image d = src;
    if (blur_sigma > 0) d = gaussian_blur(d, blur_sigma);
    if (spec.recipe.noise_sigma > 0) d = sky_glow(d, SkyGlowParams{spec.recipe.noise_sigma, noise_seed});
    if (spec.recipe.downscale > 1) {
      d = resize_bilinear(downscale_area(d, spec.recipe.downscale), spec.side, spec.side);
    }
    return d;
  };
  pair.degraded = degrade(clean, spec.recipe.blur_sigma, derive_seed(spec.seed, "noise"));
  if (spec.nir) {
    // Near-infrared band: luminance through a wider PSF.
    const double nir_sigma = spec.recipe.blur_sigma > 0 ? 1.5 * spec.recipe.blur_sigma : 0.0;
    Image band = degrade(luminance(clean), nir_sigma, derive_seed(spec.seed, "noise_nir"));
    Image fused(spec.channels + 1, spec.side, spec.side, Domain::unit);
    std::copy(pair.degraded.data.begin(), pair.degraded.data.end(), fused.data.begin());
    std::copy(band.data.begin(), band.data.end(), fused.data.begin() + static_cast<long>(spec.channels * fused.plane()));
    pair.degraded = std::move(fused);
  }
  pair.clean = std::move(clean);
  return pair;
}

std::string_view role_name(Role r) { return r == Role::mobil ? "mobil" : "groundtruth"; }

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::vector<const ManifestEntry*> Manifest::select(Role role, std::optional<Split> split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.role == role && (!split || e.split == *split)) out.push_back(&e);
  return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Manifest build_manifest(const fs::path& root, const ManifestOptions& options) {
  if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
  const double total = options.train_ratio + options.val_ratio + options.test_ratio;
  if (options.train_ratio < 0 || options.val_ratio < 0 || options.test_ratio < 0 || std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  Manifest m;
  std::vector<std::string> objects;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) objects.push_back(e.path().filename().string());
  std::sort(objects.begin(), objects.end());
  for (const auto& obj : options.catalog)
    if (!std::binary_search(objects.begin(), objects.end(), obj.name)) {
      m.issues.push_back("missing directory for catalog object " + obj.name);
    }

  for (const auto& object : objects) {
    bool paired = true;
    for (const auto& c : options.catalog)
      if (c.name == object) paired = c.paired;
    for (Role role : {Role::mobil, Role::groundtruth}) {
      const fs::path dir = root / object / (role == Role::mobil ? "mobil" : "gt");
      if (!fs::is_directory(dir)) continue;
      if (role == Role::groundtruth && !paired) {
        m.issues.push_back(object + ": unpaired object, ground truths ignored");
        continue;
      }
      for (const auto& path : list_images(dir)) {
        std::ifstream probe(path, std::ios::binary);
        if (!probe) {
          m.issues.push_back("unreadable file " + path.string());
          continue;
        }
        ManifestEntry e;
        e.object = object;
        e.role = role;
        e.path = path;
        e.relative = fs::relative(path, root).generic_string();
        e.paired = paired;
        m.entries.push_back(std::move(e));
      }
    }
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.relative < b.relative; });

  const std::uint64_t basis = splitmix64(options.seed);
  for (Role role : {Role::mobil, Role::groundtruth}) {
    std::vector<ManifestEntry*> group;
    for (auto& e : m.entries)
      if (e.role == role) group.push_back(&e);
    std::stable_sort(group.begin(), group.end(), [&](const ManifestEntry* a, const ManifestEntry* b) {
      return fnv1a64(a->relative, basis) < fnv1a64(b->relative, basis);
    });
    const std::size_t n = group.size();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * options.train_ratio + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * options.val_ratio + 1e-9));
    for (std::size_t i = 0; i < n; ++i) {
      group[i]->split = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    }
  }
  return m;
}

}  // namespace strc
