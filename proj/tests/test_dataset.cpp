#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "strc/dataset/codec.hpp"
#include "strc/dataset/dataset.hpp"
#include "strc/rng.hpp"

using namespace strc;
namespace fs = std::filesystem;

namespace {

Image ramp(std::size_t c, std::size_t h, std::size_t w, Domain d = Domain::unit) {
  Image img(c, h, w, d);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 97) / 96.0;
  return img;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("strc_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void touch_image(const fs::path& p) { write_image(p, Image(1, 2, 2, Domain::unit, 0.5)); }

std::size_t count_peaks(const Image& img, double threshold) {
  std::size_t n = 0;
  for (std::size_t y = 1; y + 1 < img.height; ++y)
    for (std::size_t x = 1; x + 1 < img.width; ++x) {
      const double v = img.at(0, y, x);
      if (v <= threshold) continue;
      bool peak = true;
      for (int dy = -1; dy <= 1 && peak; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dy && !dx) continue;
          if (img.at(0, y + dy, x + dx) >= v) {
            peak = false;
            break;
          }
        }
      n += peak;
    }
  return n;
}

}  // namespace

TEST_CASE("normalize endpoints and round trip") {
  Image raw(1, 1, 3, Domain::raw255);
  raw.data = {0.0, 127.5, 255.0};
  const auto m = normalize(raw, Domain::model);
  CHECK(m.domain == Domain::model);
  CHECK(m.data[0] == -1.0);
  CHECK(m.data[1] == 0.0);
  CHECK(m.data[2] == 1.0);

  Rng rng(4);
  Image r(3, 6, 7, Domain::raw255);
  for (double& v : r.data) v = std::round(rng.uniform(0, 255));
  const auto back = normalize(normalize(r, Domain::model), Domain::raw255);
  for (std::size_t i = 0; i < r.data.size(); ++i) CHECK(std::abs(back.data[i] - r.data[i]) <= 1e-6);
  const auto u = normalize(normalize(r, Domain::unit), Domain::raw255);
  for (std::size_t i = 0; i < r.data.size(); ++i) CHECK(std::abs(u.data[i] - r.data[i]) <= 1e-9);

  CHECK_THROWS_AS(parse_domain("linear"), ConfigError);
  CHECK(parse_domain("model") == Domain::model);
}

TEST_CASE("image validation") {
  Image img(2, 3, 3, Domain::unit);
  CHECK_THROWS_AS(img.validate(), ShapeError);
  Image ok(3, 2, 2, Domain::unit, 0.5);
  CHECK_NOTHROW(ok.validate());
  ok.data[0] = 1.5;
  CHECK_THROWS_AS(ok.validate(), UsageError);
}

TEST_CASE("crop_and_pad: interior bbox equal to target is a sub-image") {
  const auto img = ramp(3, 12, 14);
  const BBox box{3, 2, 6, 6};
  const auto out = crop_and_pad(img, box, 6);
  REQUIRE(out.height == 6);
  REQUIRE(out.width == 6);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 6; ++x) CHECK(out.at(c, y, x) == img.at(c, y + 2, x + 3));
}

TEST_CASE("crop_and_pad: corner bbox gets a zero margin") {
  Image img(1, 8, 8, Domain::unit, 0.0);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) img.at(0, y, x) = 0.01 + 0.1 * static_cast<double>(y) + 0.01 * static_cast<double>(x);
  const BBox box{0, 0, 4, 4};
  const auto out = crop_and_pad(img, box, 8);
  // Centre (2,2); window starts at 2 - 8/2 = -2 so rows/cols 0..1 are padding.
  const long margin = 2;
  for (long y = 0; y < 8; ++y)
    for (long x = 0; x < 8; ++x) {
      const double v = out.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      if (y < margin || x < margin)
        CHECK(v == 0.0);
      else
        CHECK(v == img.at(0, static_cast<std::size_t>(y - margin), static_cast<std::size_t>(x - margin)));
    }
}

TEST_CASE("crop_and_pad: output side is fixed for any bbox position") {
  const auto img = ramp(1, 20, 30);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const BBox box{static_cast<long>(rng.below(40)) - 10, static_cast<long>(rng.below(30)) - 10, 1 + rng.below(25),
                   1 + rng.below(25)};
    const bool misses = box.x >= 30 || box.y >= 20 || box.x + static_cast<long>(box.width) <= 0 ||
                        box.y + static_cast<long>(box.height) <= 0;
    if (misses) {
      CHECK_THROWS_AS(crop_and_pad(img, box, 16), UsageError);
      continue;
    }
    const auto out = crop_and_pad(img, box, 16);
    CHECK(out.height == 16);
    CHECK(out.width == 16);
  }
  CHECK_THROWS_AS(crop_and_pad(img, BBox{100, 0, 5, 5}, 8), UsageError);
}

TEST_CASE("crop_and_pad: large frame to 800 square") {
  Image frame(1, 3072, 4096, Domain::unit, 0.25);
  const auto out = crop_and_pad(frame, BBox{1500, 1000, 600, 500}, 800);
  CHECK(out.height == 800);
  CHECK(out.width == 800);
  CHECK(out.at(0, 400, 400) == 0.25);
}

TEST_CASE("bbox parsing") {
  const auto b = parse_bbox("3 -2 10 12\n");
  CHECK(b.x == 3);
  CHECK(b.y == -2);
  CHECK(b.width == 10);
  CHECK(b.height == 12);
  CHECK_THROWS_AS(parse_bbox("1 2 3"), FormatError);
  CHECK_THROWS_AS(parse_bbox("1 2 0 4"), FormatError);
}

TEST_CASE("netpbm codec round trip") {
  Image img(3, 5, 4, Domain::raw255);
  Rng rng(8);
  for (double& v : img.data) v = std::round(rng.uniform(0, 255));
  const auto bytes = encode_netpbm(img);
  CHECK(decode_netpbm(bytes) == img);
  CHECK(decode_image(bytes) == img);

  Image gray(1, 3, 3, Domain::unit, 1.0);
  const auto g = decode_netpbm(encode_netpbm(gray));
  CHECK(g.channels == 1);
  for (double v : g.data) CHECK(v == 255.0);

  const std::string wide = "P5\n2 1\n65535\n";
  Bytes w(wide.begin(), wide.end());
  for (std::uint8_t v : {0xFF, 0xFF, 0x00, 0x00}) w.push_back(v);
  const auto d = decode_netpbm(w);
  CHECK(d.data[0] == 255.0);
  CHECK(d.data[1] == 0.0);

  const std::string trunc = "P6\n4 4\n255\n abc";
  CHECK_THROWS_AS(decode_netpbm(Bytes(trunc.begin(), trunc.end())), FormatError);
  CHECK_THROWS_AS(decode_image(Bytes{1, 2, 3}), FormatError);
}

TEST_CASE("NIR sibling read and write") {
  TempDir dir("nir");
  Image img(4, 3, 3, Domain::raw255);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i * 7 % 256);
  const auto path = dir.path / "0001.ppm";
  write_image(path, img);
  CHECK(fs::exists(dir.path / "0001_nir.pgm"));
  CHECK(read_image(path) == img);
  CHECK(is_image_file(path));
  CHECK_FALSE(is_image_file(dir.path / "0001_nir.pgm"));
  CHECK_THROWS_AS(read_image(dir.path / "missing.ppm"), IoError);
}

TEST_CASE("catalog parse and format") {
  const std::string text =
      "# name ra dec paired\n"
      "Aldebaran 68.98 16.51 1\n"
      "\n"
      "Jupiter 74.5 22.0 0  # moves\n";
  const auto cat = parse_catalog(text);
  REQUIRE(cat.size() == 2);
  CHECK(cat[0].name == "Aldebaran");
  CHECK(cat[0].paired);
  CHECK_FALSE(cat[1].paired);
  const auto again = parse_catalog(format_catalog(cat));
  REQUIRE(again.size() == 2);
  CHECK(again[1].ra_deg == cat[1].ra_deg);
  CHECK_THROWS_AS(parse_catalog("X 360 0 1"), ConfigError);
  CHECK_THROWS_AS(parse_catalog("X 10 91 1"), ConfigError);
  CHECK_THROWS_AS(parse_catalog("X 10"), ConfigError);
}

TEST_CASE("synth_starfield: identity recipe and determinism") {
  StarFieldSpec spec;
  spec.star_count = 1;
  spec.recipe = DegradationRecipe{0.0, 0.0, 1};
  spec.seed = 9;
  const auto pair = synth_starfield(spec);
  CHECK(pair.degraded == pair.clean);

  spec = StarFieldSpec{};
  spec.seed = 42;
  const auto a = synth_starfield(spec), b = synth_starfield(spec);
  CHECK(a.clean == b.clean);
  CHECK(a.degraded == b.degraded);
  spec.seed = 43;
  CHECK_FALSE(synth_starfield(spec).clean == a.clean);

  for (double v : a.clean.data) REQUIRE((v >= 0 && v <= 1));
  for (double v : a.degraded.data) REQUIRE((v >= 0 && v <= 1));

  StarFieldSpec bad;
  bad.side = 8;
  CHECK_THROWS_AS(synth_starfield(bad), ConfigError);
  bad = StarFieldSpec{};
  bad.star_count = 0;
  CHECK_THROWS_AS(synth_starfield(bad), ConfigError);
}

TEST_CASE("synth_starfield: NIR band appended") {
  StarFieldSpec spec;
  spec.nir = true;
  spec.seed = 3;
  const auto pair = synth_starfield(spec);
  CHECK(pair.clean.channels == 3);
  CHECK(pair.degraded.channels == 4);
}

TEST_CASE("synth_starfield: peak detection recovers the star count") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    StarFieldSpec spec;
    spec.channels = 1;
    spec.star_count = 5;
    spec.mag_range = 1.5;
    spec.min_separation = 8;
    spec.seed = seed;
    const auto pair = synth_starfield(spec);
    const double threshold = spec.background + 5.0 * spec.recipe.noise_sigma;
    CHECK(count_peaks(pair.clean, threshold) == spec.star_count);
  }
}

TEST_CASE("synth_starfield: clean flux is not below degraded flux over 100 seeds") {
  // Paired one-sided test: mean(clean - degraded) must not be significantly negative.
  std::vector<double> diff;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    StarFieldSpec spec;
    spec.seed = seed;
    spec.background = 0.1;
    const auto pair = synth_starfield(spec);
    double c = 0, d = 0;
    for (double v : pair.clean.data) c += v;
    for (double v : pair.degraded.data) d += v;
    diff.push_back(c - d);
  }
  double mean = 0, var = 0;
  for (double v : diff) mean += v / static_cast<double>(diff.size());
  for (double v : diff) var += (v - mean) * (v - mean) / static_cast<double>(diff.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(diff.size()));
  CHECK(mean >= -3.0 * se);
}

TEST_CASE("build_manifest: empty root and missing root") {
  TempDir dir("empty");
  const auto m = build_manifest(dir.path);
  CHECK(m.entries.empty());
  CHECK_THROWS_AS(build_manifest(dir.path / "nope"), IoError);
}

TEST_CASE("build_manifest: 7 objects x 10 files split 56/7/7") {
  TempDir dir("split");
  for (int o = 0; o < 7; ++o)
    for (int f = 0; f < 10; ++f) {
      char name[16];
      std::snprintf(name, sizeof name, "%04d.ppm", f);
      touch_image(dir.path / ("obj" + std::to_string(o)) / "mobil" / name);
    }
  const auto m = build_manifest(dir.path, ManifestOptions{17});
  REQUIRE(m.entries.size() == 70);
  CHECK(m.select(Role::mobil, Split::train).size() == 56);
  CHECK(m.select(Role::mobil, Split::val).size() == 7);
  CHECK(m.select(Role::mobil, Split::test).size() == 7);
  for (std::size_t i = 1; i < m.entries.size(); ++i) CHECK(m.entries[i - 1].relative < m.entries[i].relative);

  const auto again = build_manifest(dir.path, ManifestOptions{17});
  for (std::size_t i = 0; i < m.entries.size(); ++i) CHECK(again.entries[i].split == m.entries[i].split);
  const auto other = build_manifest(dir.path, ManifestOptions{18});
  bool differs = false;
  for (std::size_t i = 0; i < m.entries.size(); ++i) differs |= other.entries[i].split != m.entries[i].split;
  CHECK(differs);

  ManifestOptions bad{17, 0.5, 0.1, 0.1, {}};
  CHECK_THROWS_AS(build_manifest(dir.path, bad), ConfigError);
}

TEST_CASE("build_manifest: unpaired objects drop ground truths") {
  TempDir dir("unpaired");
  touch_image(dir.path / "Jupiter" / "mobil" / "0000.ppm");
  touch_image(dir.path / "Jupiter" / "gt" / "0000.ppm");
  touch_image(dir.path / "Aldebaran" / "mobil" / "0000.ppm");
  touch_image(dir.path / "Aldebaran" / "gt" / "0000.ppm");
  ManifestOptions opts;
  opts.catalog = {{"Aldebaran", 68.98, 16.5, true}, {"Jupiter", 74.5, 22.0, false}, {"Elnath", 81.57, 28.6, true}};
  const auto m = build_manifest(dir.path, opts);
  std::size_t jupiter_gt = 0, jupiter_mobil = 0, ald_gt = 0;
  for (const auto& e : m.entries) {
    if (e.object == "Jupiter" && e.role == Role::groundtruth) ++jupiter_gt;
    if (e.object == "Jupiter" && e.role == Role::mobil) {
      ++jupiter_mobil;
      CHECK_FALSE(e.paired);
    }
    if (e.object == "Aldebaran" && e.role == Role::groundtruth) ++ald_gt;
  }
  CHECK(jupiter_gt == 0);
  CHECK(jupiter_mobil == 1);
  CHECK(ald_gt == 1);
  CHECK(m.issues.size() == 2);
}
