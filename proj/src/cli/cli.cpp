#include "strc/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>

#include "strc/augment/augment.hpp"
#include "strc/cli/config.hpp"
#include "strc/dataset/codec.hpp"
#include "strc/dataset/dataset.hpp"
#include "strc/metrics/metrics.hpp"
#include "strc/rng.hpp"
#include "strc/survey/survey.hpp"
#include "strc/training/inference.hpp"
#include "strc/training/training.hpp"

namespace strc {

namespace fs = std::filesystem;

namespace {

/// `level=info cmd=train msg="..."` lines.
class Logger {
 public:
  Logger(std::ostream& os, std::string cmd) : os_(os), cmd_(std::move(cmd)) {}
  void info(const std::string& msg) { write("info", msg); }
  void warn(const std::string& msg) { write("warn", msg); }
  void error(const std::string& msg) { write("error", msg); }

 private:
  void write(const char* level, const std::string& msg) {
    std::string quoted;
    for (char c : msg) {
      if (c == '"' || c == '\\') quoted += '\\';
      quoted += c == '\n' ? ' ' : c;
    }
    os_ << "level=" << level << " cmd=" << cmd_ << " msg=\"" << quoted << "\"\n" << std::flush;
  }
  std::ostream& os_;
  std::string cmd_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

/// Creates the output directory and records the resolved config and version.
fs::path open_run(const RunConfig& cfg) {
  const fs::path out = cfg.str("out");
  if (out.empty()) throw ConfigError("out must not be empty");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());
  write_text(out / "run_config.txt", cfg.snapshot());
  write_text(out / "version.txt", std::string(STRC_VERSION) + "\n");
  return out;
}

fs::path existing_dir(const RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.str(key);
  if (v.empty()) throw UsageError(key + " is required");
  if (!fs::is_directory(v)) throw UsageError(key + ": directory not found: " + v);
  return v;
}

fs::path existing_file(const RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.str(key);
  if (v.empty()) throw UsageError(key + " is required");
  if (!fs::is_regular_file(v)) throw UsageError(key + ": file not found: " + v);
  return v;
}

bool is_nir_sibling(const fs::path& p) {
  const std::string stem = p.stem().string();
  return stem.size() > 4 && stem.compare(stem.size() - 4, 4, "_nir") == 0;
}

/// Image files below `root` (NIR siblings excluded), sorted by relative path.
std::vector<fs::path> collect_images(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && is_image_file(e.path()) && !is_nir_sibling(e.path())) {
      out.push_back(fs::relative(e.path(), root));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string pair_key(const fs::path& relative) {
  return fs::path(relative).replace_extension().generic_string();
}

ManifestOptions manifest_options(const RunConfig& cfg, const std::string& catalog_key = "") {
  ManifestOptions opt;
  opt.seed = derive_seed(cfg.u64("seed"), "split");
  if (!catalog_key.empty() && !cfg.str(catalog_key).empty()) opt.catalog = read_catalog(cfg.str(catalog_key));
  return opt;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, Logger& log) {
  const std::size_t count = cfg.size("synth.count");
  if (count == 0) throw UsageError("synth.count must be >= 1");
  StarFieldSpec spec;
  spec.side = cfg.size("synth.side");
  spec.star_count = cfg.size("synth.stars");
  spec.nir = cfg.boolean("synth.nir");
  spec.background = cfg.real("synth.background");
  spec.recipe.blur_sigma = cfg.real("synth.blur_sigma");
  spec.recipe.noise_sigma = cfg.real("synth.noise_sigma");
  spec.recipe.downscale = cfg.size("synth.downscale");
  try {
    spec.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  const std::string object = cfg.str("synth.object");
  if (object.empty() || object.find('/') != std::string::npos) throw ConfigError("synth.object must be a plain name");

  const fs::path out = open_run(cfg);
  const fs::path mobil = out / object / "mobil", gt = out / object / "gt";
  fs::create_directories(mobil);
  fs::create_directories(gt);
  const std::uint64_t base = derive_seed(cfg.u64("seed"), "synth");
  for (std::size_t i = 0; i < count; ++i) {
    spec.seed = derive_seed(base, i);
    const auto pair = synth_starfield(spec);
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.ppm", i);
    write_image(mobil / name, normalize(pair.degraded, Domain::raw255));
    write_image(gt / name, normalize(pair.clean, Domain::raw255));
  }
  const auto manifest = build_manifest(out, manifest_options(cfg));
  for (const auto& issue : manifest.issues) log.warn(issue);
  log.info("wrote " + std::to_string(count) + " pairs to " + (out / object).string() + " (" +
           std::to_string(manifest.entries.size()) + " manifest entries)");
  return kExitOk;
}

int cmd_fetch(const RunConfig& cfg, Logger& log) {
  const auto objects = read_catalog(cfg.str("fetch.catalog"));
  const auto surveys = read_survey_catalog(cfg.str("fetch.surveys"));
  const CutoutGeometry geo{cfg.real("fetch.fov"), cfg.size("fetch.width"), cfg.size("fetch.height"),
                           cfg.str("fetch.format")};
  SurveyClientOptions opt;
  opt.mode = cfg.boolean("offline") ? FetchMode::offline : FetchMode::live;
  opt.cache_dir = cfg.str("fetch.cache");
  opt.base_url = resolve_survey_url(cfg.str("fetch.base_url"));
  opt.retry.timeout_s = cfg.real("fetch.timeout");
  opt.retry.retries = static_cast<int>(cfg.size("fetch.retries"));

  const fs::path out = open_run(cfg);
  opt.provenance_log = out / "provenance.log";
  SurveyClient client(opt);
  std::string report;
  std::size_t failed_objects = 0;
  for (const auto& obj : objects) {
    ObjectFetchReport rep;
    try {
      rep = fetch_object_references(client, obj, surveys, geo, out);
    } catch (const FetchAggregateError& e) {
      rep = e.report();
      ++failed_objects;
      log.error(e.what());
    }
    report += "object=" + obj.name + " paired=" + (obj.paired ? "1" : "0") + " written=" +
              std::to_string(rep.written.size()) + " failed=" + std::to_string(rep.failures.size()) + "\n";
    for (const auto& f : rep.failures) {
      report += "  survey=" + f.survey + " kind=" + f.kind + "\n";
      log.warn(obj.name + ": " + f.survey + ": " + f.message);
    }
    log.info(obj.name + ": " + std::to_string(rep.written.size()) + "/" + std::to_string(surveys.size()) + " references");
  }
  write_text(out / "fetch_report.txt", report);
  return failed_objects ? kExitFailure : kExitOk;
}

int cmd_preprocess(const RunConfig& cfg, Logger& log) {
  const fs::path in = existing_dir(cfg, "preprocess.in");
  const std::size_t side = cfg.size("preprocess.side");
  if (side < 8) throw ConfigError("preprocess.side must be >= 8");
  const auto manifest = build_manifest(in, manifest_options(cfg, "preprocess.catalog"));
  for (const auto& issue : manifest.issues) log.warn(issue);

  const fs::path out = open_run(cfg);
  std::string listing;
  std::size_t written = 0;
  for (const auto& e : manifest.entries) {
    const Image img = read_image(e.path);
    const fs::path bbox_file = in / e.object / (e.object + ".bbox");
    BBox box;
    if (fs::exists(bbox_file)) {
      box = read_bbox(bbox_file);
    } else {
      const std::size_t s = std::min(img.height, img.width);
      box = {static_cast<long>((img.width - s) / 2), static_cast<long>((img.height - s) / 2), s, s};
    }
    Image crop = crop_and_pad(img, box, std::max(box.width, box.height));
    if (crop.height != side) crop = resize_bilinear(crop, side, side);
    const fs::path dst = out / e.relative;
    fs::create_directories(dst.parent_path());
    write_image(fs::path(dst).replace_extension(".ppm"), crop);
    listing += std::string(split_name(e.split)) + " " + std::string(role_name(e.role)) + " " + e.object + " " +
               e.relative + "\n";
    ++written;
  }
  write_text(out / "manifest.txt", listing);
  log.info("cropped " + std::to_string(written) + " images to " + std::to_string(side) + "x" + std::to_string(side));
  return kExitOk;
}

int cmd_augment(const RunConfig& cfg, Logger& log) {
  const fs::path in = existing_dir(cfg, "augment.in");
  const auto inputs = list_images(in);
  std::vector<fs::path> files;
  for (const auto& p : inputs)
    if (!is_nir_sibling(p)) files.push_back(p);
  if (files.empty()) throw UsageError("augment.in: no images in " + in.string());
  const BrightnessParams bright{cfg.real("augment.brightness_mean"), cfg.real("augment.brightness_jitter"), 3};
  const double blur = cfg.real("augment.blur_sigma"), glow = cfg.real("augment.sigma_glow");

  const fs::path out = open_run(cfg);
  const std::uint64_t base = derive_seed(cfg.u64("seed"), "augment");
  std::size_t written = 0;
  for (const auto& p : files) {
    const std::string stem = p.stem().string();
    const auto plan = make_augment_plan(derive_seed(base, stem), bright, blur, glow);
    const auto variants = augment_all(normalize(read_image(p), Domain::unit), plan);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_%02zu.ppm", v);
      write_image(out / (stem + suffix), normalize(variants[v], Domain::raw255));
      ++written;
    }
  }
  log.info("wrote " + std::to_string(written) + " variants of " + std::to_string(files.size()) + " images");
  return kExitOk;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.size("train.epochs");
  tc.batch = cfg.size("train.batch");
  tc.seed = cfg.u64("seed");
  tc.side = cfg.size("train.side");
  tc.fusion.mode = parse_fusion(cfg.str("train.fusion"));
  tc.fusion.bands = cfg.size("train.bands");
  tc.checkpoint_every = cfg.size("train.checkpoint_every");
  tc.log_every = cfg.size("train.log_every");
  tc.max_steps = cfg.size("train.max_steps");
  tc.use_attention = cfg.boolean("train.attention");
  tc.adam.lr = cfg.real("train.lr");
  tc.adam.beta1 = cfg.real("train.beta1");
  tc.adam.beta2 = cfg.real("train.beta2");
  tc.weights = {cfg.real("train.w_adv"), cfg.real("train.w_cyc"), cfg.real("train.w_astro"), cfg.real("train.w_idt"),
                cfg.real("train.w_paired")};
  tc.validate();
  return tc;
}

std::vector<Image> load_pool(const std::vector<fs::path>& paths, std::size_t channels, std::size_t side) {
  std::vector<Image> pool;
  pool.reserve(paths.size());
  for (const auto& p : paths) {
    Image img = normalize(read_image(p), Domain::unit);
    if (img.channels < channels) {
      throw ConfigError(p.string() + " has " + std::to_string(img.channels) + " channels, training needs " +
                        std::to_string(channels));
    }
    if (img.channels > channels) img = select_channels(img, 0, channels);
    if (img.height != side || img.width != side) img = resize_bilinear(img, side, side);
    pool.push_back(std::move(img));
  }
  return pool;
}

int cmd_train(const RunConfig& cfg, Logger& log) {
  const TrainConfig tc = train_config(cfg);
  std::vector<fs::path> lr_paths, hr_paths;
  if (!cfg.str("train.lr_dir").empty() || !cfg.str("train.hr_dir").empty()) {
    for (const auto& p : list_images(existing_dir(cfg, "train.lr_dir")))
      if (!is_nir_sibling(p)) lr_paths.push_back(p);
    for (const auto& p : list_images(existing_dir(cfg, "train.hr_dir")))
      if (!is_nir_sibling(p)) hr_paths.push_back(p);
  } else {
    const auto manifest = build_manifest(existing_dir(cfg, "train.data"), manifest_options(cfg, "train.catalog"));
    for (const auto* e : manifest.select(Role::mobil, Split::train))
      if (e->paired) lr_paths.push_back(e->path);
    for (const auto* e : manifest.select(Role::groundtruth, Split::train)) hr_paths.push_back(e->path);
  }
  std::optional<fs::path> resume;
  if (!cfg.str("train.resume").empty()) resume = existing_file(cfg, "train.resume");

  const TrainData data{load_pool(lr_paths, tc.fusion.lr_channels(), tc.side), load_pool(hr_paths, 3, tc.side)};
  const fs::path out = open_run(cfg);
  log.info("training on " + std::to_string(data.lr.size()) + " LR / " + std::to_string(data.hr.size()) +
           " HR images, " + std::to_string(batches_per_epoch(tc, data)) + " batches per epoch");
  LoopOptions lopt{out, resume, [&](const LossRecord& r) {
                     if (r.step % tc.log_every == 0) log.info(r.format());
                   }};
  const auto res = train_loop(tc, data, lopt);
  log.info("ran " + std::to_string(res.records.size()) + " steps; checkpoint " + res.last_checkpoint.string());
  return kExitOk;
}

int cmd_infer(const RunConfig& cfg, Logger& log) {
  const fs::path ckpt = existing_file(cfg, "infer.checkpoint");
  const fs::path in = existing_dir(cfg, "infer.in");
  const auto files = collect_images(in);
  if (files.empty()) throw UsageError("infer.in: no images in " + in.string());
  auto model = load_generator(ckpt);
  const std::size_t channels = model.fusion.lr_channels();

  const fs::path out = open_run(cfg);
  for (const auto& rel : files) {
    Image img = normalize(read_image(in / rel), Domain::unit);
    if (img.channels > channels) img = select_channels(img, 0, channels);
    const Image result = enhance(model.g, img);
    const fs::path dst = (out / rel).replace_extension(".ppm");
    fs::create_directories(dst.parent_path());
    write_image(dst, normalize(result, Domain::raw255));
  }
  log.info("enhanced " + std::to_string(files.size()) + " images with " + ckpt.filename().string());
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, Logger& log) {
  const fs::path gen_dir = existing_dir(cfg, "evaluate.generated");
  const fs::path ref_dir = existing_dir(cfg, "evaluate.reference");
  const FeatureExtractorSpec features{parse_feature_mode(cfg.str("evaluate.features")),
                                      derive_seed(cfg.u64("seed"), "features")};
  const std::string model = cfg.str("evaluate.model");

  std::map<std::string, fs::path> generated;
  for (const auto& rel : collect_images(gen_dir)) generated.emplace(pair_key(rel), gen_dir / rel);

  // Splits come from the reference layout when it has one.
  std::map<std::string, std::string> split_of;
  try {
    for (const auto& e : build_manifest(ref_dir, manifest_options(cfg)).entries)
      split_of[pair_key(e.relative)] = std::string(split_name(e.split));
  } catch (const IoError&) {
  }

  const fs::path out = open_run(cfg);
  struct Pair {
    Image gen, ref;
  };
  std::map<std::string, std::vector<Pair>> by_split;
  std::string errors;
  auto fail = [&](const std::string& key, const std::string& msg) {
    errors += "pair=" + key + " error=" + msg + "\n";
    log.warn(key + ": " + msg);
  };
  for (const auto& rel : collect_images(ref_dir)) {
    const std::string key = pair_key(rel);
    const auto it = generated.find(key);
    if (it == generated.end()) {
      fail(key, "no generated image");
      continue;
    }
    try {
      Image ref = normalize(read_image(ref_dir / rel), Domain::unit);
      Image gen = normalize(read_image(it->second), Domain::unit);
      if (ref.channels == 4) ref = select_channels(ref, 0, 3);
      if (gen.channels == 4) gen = select_channels(gen, 0, 3);
      if (!ref.same_shape(gen)) {
        fail(key, "shape mismatch: generated " + std::to_string(gen.channels) + "x" + std::to_string(gen.height) + "x" +
                      std::to_string(gen.width) + " vs reference " + std::to_string(ref.channels) + "x" +
                      std::to_string(ref.height) + "x" + std::to_string(ref.width));
        continue;
      }
      const auto s = split_of.find(key);
      by_split[s == split_of.end() ? "all" : s->second].push_back({std::move(gen), std::move(ref)});
    } catch (const Error& e) {
      fail(key, e.what());
    }
  }

  std::vector<ReportRow> rows;
  for (const char* split : {"train", "val", "test", "all"}) {
    const auto it = by_split.find(split);
    if (it == by_split.end()) continue;
    const auto& pairs = it->second;
    ReportRow row{model, split, std::nan(""), 0, 0};
    std::vector<Image> gens, refs;
    for (const auto& p : pairs) {
      row.mean_psnr += psnr(p.ref, p.gen);
      row.peak_count_delta += static_cast<double>(morphology(p.gen).detection.peaks.size()) -
                              static_cast<double>(morphology(p.ref).detection.peaks.size());
      gens.push_back(p.gen);
      refs.push_back(p.ref);
    }
    row.mean_psnr /= static_cast<double>(pairs.size());
    row.peak_count_delta /= static_cast<double>(pairs.size());
    if (pairs.size() < 2) {
      log.warn(std::string(split) + ": FID needs at least two pairs");
    } else {
      try {
        row.fid = fid(fit_stats(extract_features(gens, features)), fit_stats(extract_features(refs, features)));
      } catch (const Error& e) {
        fail(split, std::string("FID: ") + e.what());
      }
    }
    log.info(std::string(split) + ": " + std::to_string(pairs.size()) + " pairs, fid=" + fmt("%.6g", row.fid) +
             " psnr=" + fmt("%.4f", row.mean_psnr));
    rows.push_back(row);
  }
  write_text(out / "report.csv", format_report(rows));
  write_text(out / "errors.txt", errors);
  if (rows.empty()) {
    log.error("no image pairs could be evaluated");
    return kExitFailure;
  }
  return kExitOk;
}

struct Command {
  const char* name;
  const char* help;
  int (*run)(const RunConfig&, Logger&);
};

constexpr Command kCommands[] = {
    {"synth", "write synthetic star-field pairs", cmd_synth},
    {"fetch", "fetch survey reference cutouts for the catalog", cmd_fetch},
    {"preprocess", "crop a dataset to square inputs", cmd_preprocess},
    {"augment", "write 36 augmented variants per image", cmd_augment},
    {"train", "train the cycle-consistent generators", cmd_train},
    {"infer", "enhance images with a trained generator", cmd_infer},
    {"evaluate", "compare generated and reference images", cmd_evaluate},
};

std::string option_name(const std::string& key) {
  std::string name = key.substr(key.find('.') + 1);
  std::replace(name.begin(), name.end(), '_', '-');
  return "--" + name;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) {
  CLI::App app{"Star-field enhancement pipeline", "strcgan"};
  app.set_version_flag("--version", STRC_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::map<std::string, std::string> flags;
  std::string config_file;
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "key=value configuration file");
  app.add_option("--set", overrides, "override any key: --set train.lr=1e-4");
  for (const auto& k : config_keys()) {
    if (k.key.find('.') != std::string::npos) continue;
    const std::string key = k.key;
    if (k.flag) {
      app.add_flag_callback("--" + key, [&flags, key] { flags[key] = "1"; }, k.help);
    } else {
      app.add_option_function<std::string>("--" + key, [&flags, key](const std::string& v) { flags[key] = v; }, k.help)
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }
  std::map<const CLI::App*, const Command*> dispatch;
  for (const auto& cmd : kCommands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    const std::string prefix = std::string(cmd.name) + ".";
    for (const auto& k : config_keys()) {
      if (k.key.rfind(prefix, 0) != 0) continue;
      const std::string key = k.key;
      sub->add_option_function<std::string>(option_name(key), [&flags, key](const std::string& v) { flags[key] = v; },
                                            k.help + " [" + k.default_value + "]")
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    dispatch[sub] = &cmd;
  }

  std::vector<std::string> argv_store{"strcgan"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, log);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const Command* cmd = nullptr;
  for (const auto& [sub, c] : dispatch)
    if (sub->parsed()) cmd = c;
  Logger logger(log, cmd->name);
  try {
    RunConfig cfg;
    if (!config_file.empty()) cfg.merge_file(config_file);
    for (const auto& kv : overrides) cfg.merge_text(kv, "--set");
    for (const auto& [key, value] : flags) cfg.set(key, value);
    return cmd->run(cfg, logger);
  } catch (const UsageError& e) {
    logger.error(e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    logger.error(e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    logger.error(e.what());
    return kExitFailure;
  }
}

}  // namespace strc
