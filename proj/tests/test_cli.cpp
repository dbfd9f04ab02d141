#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "strc/cli/cli.hpp"
#include "strc/cli/config.hpp"
#include "strc/dataset/codec.hpp"
#include "strc/dataset/dataset.hpp"
#include "survey_fixtures.hpp"

using namespace strc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("strc_cli_" + tag + "_" + std::to_string(getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code;
  std::string log;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, log;
  const int code = run_cli(args, out, log);
  return {code, log.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Relative path -> contents for every file below `root` except the
/// config snapshot, which records the output path itself.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "run_config.txt") continue;
    out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> v;
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::string s(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("config resolution: defaults < file < flags") {
  RunConfig cfg;
  CHECK(cfg.size("synth.count") == 8);
  cfg.merge_text("# comment\nsynth.count = 3\n\nseed=11\n");
  CHECK(cfg.size("synth.count") == 3);
  CHECK(cfg.u64("seed") == 11);
  CHECK_THROWS_AS(cfg.merge_text("nope=1"), ConfigError);
  CHECK_THROWS_AS(cfg.merge_text("synth.count"), ConfigError);
  cfg.set("synth.count", "x");
  CHECK_THROWS_AS(cfg.size("synth.count"), ConfigError);
  cfg.set("offline", "maybe");
  CHECK_THROWS_AS(cfg.boolean("offline"), ConfigError);
  CHECK(RunConfig().snapshot().rfind("seed=0\nout=run\noffline=0\n", 0) == 0);

  const auto dir = temp_dir("precedence");
  std::ofstream(dir / "run.cfg") << "synth.count=3\nsynth.side=16\n";
  REQUIRE(cli({"--config", s(dir / "run.cfg"), "synth", "--out", s(dir / "a")}).code == 0);
  CHECK(list_images(dir / "a" / "field" / "gt").size() == 3);
  REQUIRE(cli({"--config", s(dir / "run.cfg"), "synth", "--count", "5", "--out", s(dir / "b")}).code == 0);
  CHECK(list_images(dir / "b" / "field" / "gt").size() == 5);
  REQUIRE(cli({"synth", "--config", s(dir / "run.cfg"), "--set", "synth.count=2", "--out", s(dir / "c")}).code == 0);
  CHECK(list_images(dir / "c" / "field" / "gt").size() == 2);
  const auto snap = lines(dir / "c" / "run_config.txt");
  CHECK(std::find(snap.begin(), snap.end(), "synth.count=2") != snap.end());
  CHECK(std::find(snap.begin(), snap.end(), "synth.side=16") != snap.end());
  CHECK(slurp(dir / "c" / "version.txt") == std::string(STRC_VERSION) + "\n");

  std::ofstream(dir / "bad.cfg") << "synth.colour=3\n";
  const auto bad = cli({"--config", s(dir / "bad.cfg"), "synth", "--out", s(dir / "d")});
  CHECK(bad.code == 2);
  CHECK(bad.log.find("synth.colour") != std::string::npos);
  CHECK(cli({"--config", s(dir / "missing.cfg"), "synth"}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({"synth", "--no-such-flag"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"--version"}).code == 0);
  const auto r = cli({"synth", "--count", "0", "--out", s(temp_dir("zero"))});
  CHECK(r.code == 2);
  CHECK(r.log.find("level=error cmd=synth") != std::string::npos);
  CHECK(cli({"synth", "--count", "-1"}).code == 2);
  fs::remove_all(temp_dir("zero"));
}

TEST_CASE("synth writes a deterministic dataset") {
  const auto dir = temp_dir("synth");
  for (const char* run : {"x", "y"}) {
    fs::create_directories(dir / run);
    REQUIRE(cli({"synth", "--count", "8", "--side", "32", "--seed", "7", "--out", s(dir / run / "data")}).code == 0);
  }
  const auto m = build_manifest(dir / "x" / "data");
  CHECK(m.entries.size() == 16);
  CHECK(m.issues.empty());
  CHECK(m.select(Role::mobil).size() == 8);
  CHECK(m.select(Role::groundtruth).size() == 8);
  CHECK(read_image(m.entries.front().path).width == 32);
  CHECK(tree(dir / "x") == tree(dir / "y"));
  CHECK(tree(dir / "x").size() == 17);

  REQUIRE(cli({"synth", "--count", "8", "--side", "32", "--seed", "8", "--out", s(dir / "z")}).code == 0);
  CHECK(slurp(dir / "z" / "field" / "gt" / "0000.ppm") != slurp(dir / "x" / "data" / "field" / "gt" / "0000.ppm"));

  REQUIRE(cli({"synth", "--count", "2", "--nir", "1", "--out", s(dir / "nir")}).code == 0);
  CHECK(read_image(dir / "nir" / "field" / "mobil" / "0000.ppm").channels == 4);
  CHECK(build_manifest(dir / "nir").entries.size() == 4);

  fs::create_directories(dir / "ro");
  std::ofstream(dir / "ro" / "file") << "x";
  CHECK(cli({"synth", "--out", s(dir / "ro" / "file" / "sub")}).code == 1);
  fs::remove_all(dir);
}

TEST_CASE("augment writes 36 variants per image") {
  const auto dir = temp_dir("augment");
  REQUIRE(cli({"synth", "--count", "3", "--side", "16", "--out", s(dir / "data")}).code == 0);
  for (const char* run : {"a", "b"})
    REQUIRE(cli({"augment", "--in", s(dir / "data" / "field" / "gt"), "--seed", "4", "--out", s(dir / run)}).code == 0);
  CHECK(list_images(dir / "a").size() == 108);
  CHECK(tree(dir / "a") == tree(dir / "b"));
  REQUIRE(cli({"augment", "--in", s(dir / "data" / "field" / "gt"), "--seed", "5", "--out", s(dir / "c")}).code == 0);
  CHECK(tree(dir / "a") != tree(dir / "c"));

  const auto missing = cli({"augment", "--in", s(dir / "nowhere"), "--out", s(dir / "d")});
  CHECK(missing.code == 2);
  CHECK(missing.log.find(s(dir / "nowhere")) != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "d"));
  fs::create_directories(dir / "empty");
  CHECK(cli({"augment", "--in", s(dir / "empty"), "--out", s(dir / "e")}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("train, resume, infer, evaluate") {
  const auto dir = temp_dir("train");
  REQUIRE(cli({"synth", "--count", "8", "--side", "16", "--seed", "2", "--out", s(dir / "data")}).code == 0);
  const std::vector<std::string> common{"--side", "16", "--batch", "2", "--seed", "3", "--lr-dir",
                                        s(dir / "data" / "field" / "mobil"), "--hr-dir", s(dir / "data" / "field" / "gt")};
  auto train = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"train"};
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };

  SUBCASE("invalid side is rejected before training") {
    const auto r = train({"--side", "12", "--out", s(dir / "bad")});
    CHECK(r.code == 2);
    CHECK(r.log.find("multiple of 8") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "bad"));
    CHECK(train({"--fusion", "sideways", "--out", s(dir / "bad")}).code == 2);
    CHECK(train({"--fusion", "early_fusion_nir", "--out", s(dir / "bad")}).code == 2);  // 3-channel LR data
  }

  SUBCASE("one epoch writes checkpoints; resume matches the uninterrupted run") {
    REQUIRE(train({"--epochs", "2", "--out", s(dir / "full")}).code == 0);
    CHECK(lines(dir / "full" / "train_log.txt").size() == 8);
    CHECK(fs::exists(dir / "full" / "checkpoints" / "ckpt_000008.strc"));
    CHECK(fs::exists(dir / "full" / "run_config.txt"));
    CHECK(fs::exists(dir / "full" / "version.txt"));

    REQUIRE(train({"--epochs", "1", "--out", s(dir / "part")}).code == 0);
    CHECK(fs::exists(dir / "part" / "checkpoints" / "ckpt_000004.strc"));
    REQUIRE(train({"--epochs", "2", "--out", s(dir / "part"), "--resume",
                   s(dir / "part" / "checkpoints" / "ckpt_000004.strc")})
                .code == 0);
    CHECK(slurp(dir / "part" / "train_log.txt") == slurp(dir / "full" / "train_log.txt"));
    CHECK(slurp(dir / "part" / "checkpoints" / "ckpt_000008.strc") ==
          slurp(dir / "full" / "checkpoints" / "ckpt_000008.strc"));
    CHECK(train({"--epochs", "2", "--seed", "4", "--out", s(dir / "other"), "--resume",
                 s(dir / "part" / "checkpoints" / "ckpt_000004.strc")})
              .code == 2);
    CHECK(train({"--out", s(dir / "x"), "--resume", s(dir / "nope.strc")}).code == 2);

    // Inference on every image, including an odd-sized frame of an
    // unpaired object.
    const fs::path ckpt = dir / "full" / "checkpoints" / "ckpt_000008.strc";
    fs::create_directories(dir / "in" / "Jupiter" / "mobil");
    fs::copy(dir / "data" / "field" / "mobil", dir / "in" / "field", fs::copy_options::recursive);
    Image odd(3, 20, 28, Domain::raw255, 40.0);
    odd.at(1, 10, 10) = 255;
    write_image(dir / "in" / "Jupiter" / "mobil" / "0000.ppm", odd);
    REQUIRE(cli({"infer", "--checkpoint", s(ckpt), "--in", s(dir / "in"), "--out", s(dir / "gen")}).code == 0);
    std::size_t outputs = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "gen"))
      outputs += e.is_regular_file() && is_image_file(e.path());
    CHECK(outputs == 9);
    const Image jup = read_image(dir / "gen" / "Jupiter" / "mobil" / "0000.ppm");
    CHECK(jup.height == 20);
    CHECK(jup.width == 28);
    CHECK(jup.channels == 3);
    CHECK(jup.domain == Domain::raw255);
    CHECK(slurp(dir / "gen" / "field" / "0003.ppm").rfind("P6\n16 16\n255\n", 0) == 0);
    REQUIRE(cli({"infer", "--checkpoint", s(ckpt), "--in", s(dir / "in"), "--out", s(dir / "gen2")}).code == 0);
    CHECK(tree(dir / "gen") == tree(dir / "gen2"));
    CHECK(cli({"infer", "--checkpoint", s(ckpt), "--in", s(dir / "nothere"), "--out", s(dir / "g3")}).code == 2);
    std::ofstream(dir / "junk.strc") << "junk";
    fs::copy_file(fs::path(ckpt).replace_extension(".meta"), dir / "junk.meta");
    CHECK(cli({"infer", "--checkpoint", s(dir / "junk.strc"), "--in", s(dir / "in"), "--out", s(dir / "g4")}).code == 1);

    // Generated vs the clean references.
    const auto ev = cli({"evaluate", "--generated", s(dir / "gen" / "field"), "--reference",
                         s(dir / "data" / "field" / "gt"), "--out", s(dir / "ev")});
    REQUIRE(ev.code == 0);
    const auto report = lines(dir / "ev" / "report.csv");
    REQUIRE(report.size() == 2);
    CHECK(report[0] == "model,split,fid,mean_psnr,peak_count_delta");
    CHECK(report[1].rfind("strc,all,", 0) == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("evaluate reports identical sets, splits and per-pair errors") {
  const auto dir = temp_dir("evaluate");
  REQUIRE(cli({"synth", "--count", "10", "--side", "16", "--out", s(dir / "data")}).code == 0);
  const fs::path gt = dir / "data" / "field" / "gt";

  REQUIRE(cli({"evaluate", "--generated", s(gt), "--reference", s(gt), "--out", s(dir / "same")}).code == 0);
  auto rows = lines(dir / "same" / "report.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1] == "strc,all,0.000000,100.000000,0.000000");

  // A dataset root evaluates one row per split present in the manifest.
  REQUIRE(cli({"evaluate", "--generated", s(dir / "data"), "--reference", s(dir / "data"), "--model", "ident", "--out",
               s(dir / "splits")})
              .code == 0);
  rows = lines(dir / "splits" / "report.csv");
  const auto m = build_manifest(dir / "data", ManifestOptions{derive_seed(0, "split"), 0.8, 0.1, 0.1, {}});
  std::set<Split> splits;
  for (const auto& e : m.entries) splits.insert(e.split);
  CHECK(rows.size() == splits.size() + 1);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].rfind("ident,", 0) == 0);

  fs::copy(gt, dir / "gen");
  write_image(dir / "gen" / "0002.ppm", Image(3, 8, 8, Domain::raw255, 10.0));
  fs::remove(dir / "gen" / "0005.ppm");
  const auto r = cli({"evaluate", "--generated", s(dir / "gen"), "--reference", s(gt), "--out", s(dir / "partial")});
  CHECK(r.code == 0);
  const auto errors = lines(dir / "partial" / "errors.txt");
  REQUIRE(errors.size() == 2);
  CHECK(errors[0].rfind("pair=0002 error=shape mismatch", 0) == 0);
  CHECK(errors[1] == "pair=0005 error=no generated image");
  rows = lines(dir / "partial" / "report.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1] == "strc,all,0.000000,100.000000,0.000000");

  fs::create_directories(dir / "nothing");
  CHECK(cli({"evaluate", "--generated", s(dir / "nothing"), "--reference", s(gt), "--out", s(dir / "none")}).code == 1);
  CHECK(cli({"evaluate", "--generated", s(dir / "gone"), "--reference", s(gt), "--out", s(dir / "none")}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("preprocess crops to square inputs") {
  const auto dir = temp_dir("preprocess");
  fs::create_directories(dir / "raw" / "Pleiades" / "mobil");
  fs::create_directories(dir / "raw" / "Pleiades" / "gt");
  Image frame(3, 40, 60, Domain::raw255, 0.0);
  frame.at(0, 20, 30) = 200;
  write_image(dir / "raw" / "Pleiades" / "mobil" / "0000.ppm", frame);
  write_image(dir / "raw" / "Pleiades" / "gt" / "0000.ppm", Image(3, 24, 24, Domain::raw255, 9.0));
  std::ofstream(dir / "raw" / "Pleiades" / "Pleiades.bbox") << "22 12 16 16\n";
  REQUIRE(cli({"preprocess", "--in", s(dir / "raw"), "--side", "16", "--out", s(dir / "pre")}).code == 0);
  const Image crop = read_image(dir / "pre" / "Pleiades" / "mobil" / "0000.ppm");
  CHECK(crop.height == 16);
  CHECK(crop.width == 16);
  CHECK(crop.at(0, 8, 8) == 200);
  CHECK(read_image(dir / "pre" / "Pleiades" / "gt" / "0000.ppm").width == 16);
  CHECK(lines(dir / "pre" / "manifest.txt").size() == 2);
  CHECK(cli({"preprocess", "--in", s(dir / "absent"), "--out", s(dir / "x")}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("offline fetch builds the ground-truth layout from fixtures") {
  const auto dir = temp_dir("fetch");
  const auto surveys = read_survey_catalog(testing::kSourceDir / "config" / "surveys.txt");
  const auto objects = read_catalog(testing::kSourceDir / "config" / "catalog.txt");
  const CutoutGeometry geo{0.5, 32, 32, "jpg"};
  unsetenv(kSurveyUrlEnv);
  const auto urls = testing::make_fixture_cache(dir / "cache", "http://fixtures.invalid", objects, surveys, geo);
  const std::vector<std::string> base{"--offline",   "fetch",     "--catalog", s(testing::kSourceDir / "config" / "catalog.txt"),
                                      "--surveys",   s(testing::kSourceDir / "config" / "surveys.txt"),
                                      "--cache",     s(dir / "cache"), "--base-url", "http://fixtures.invalid",
                                      "--width",     "32",        "--height",  "32"};
  auto args = base;
  args.insert(args.end(), {"--out", s(dir / "data")});
  REQUIRE(cli(args).code == 0);
  for (const auto& o : objects) CHECK(list_images(dir / "data" / o.name / "gt").size() == 10);
  CHECK(lines(dir / "data" / "provenance.log").size() == 80);
  CHECK(lines(dir / "data" / "fetch_report.txt").front() == "object=Aldebaran paired=1 written=10 failed=0");

  fs::remove(fs::path(dir / "cache") / (sha256_hex(urls[0]) + ".ppm"));
  args = base;
  args.insert(args.end(), {"--out", s(dir / "partial")});
  CHECK(cli(args).code == 0);
  CHECK(list_images(dir / "partial" / "Aldebaran" / "gt").size() == 9);
  const auto report = lines(dir / "partial" / "fetch_report.txt");
  CHECK(report[0] == "object=Aldebaran paired=1 written=9 failed=1");
  CHECK(report[1] == "  survey=CDS/P/DSS2/blue kind=missing_fixture");

  args = base;
  args[7] = s(dir / "empty_cache");
  args.insert(args.end(), {"--out", s(dir / "none")});
  CHECK(cli(args).code == 1);
  fs::remove_all(dir);
}
