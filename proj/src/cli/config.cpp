#include "strc/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "strc/error.hpp"

namespace strc {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"seed", "0", "global seed; every subsystem derives its stream from it"},
      {"out", "run", "output directory of this run"},
      {"offline", "0", "never touch the network", true},

      {"synth.count", "8", "number of star-field pairs"},
      {"synth.side", "32", "image side in pixels"},
      {"synth.stars", "6", "stars per field"},
      {"synth.object", "field", "object directory name"},
      {"synth.nir", "0", "add a near-infrared band to the degraded frames"},
      {"synth.background", "0.05", "sky background level"},
      {"synth.blur_sigma", "1", "degradation blur sigma"},
      {"synth.noise_sigma", "0.02", "degradation noise sigma"},
      {"synth.downscale", "2", "degradation down/up-sampling factor"},

      {"fetch.catalog", "config/catalog.txt", "object catalog"},
      {"fetch.surveys", "config/surveys.txt", "survey identifiers, one per line"},
      {"fetch.cache", "cache", "cutout cache; the fixture store in offline mode"},
      {"fetch.base_url", "", "cutout service URL (STRC_SURVEY_URL wins)"},
      {"fetch.fov", "0.5", "field of view in degrees"},
      {"fetch.width", "256", "cutout width in pixels"},
      {"fetch.height", "256", "cutout height in pixels"},
      {"fetch.format", "jpg", "requested raster format"},
      {"fetch.timeout", "30", "per-request timeout in seconds"},
      {"fetch.retries", "3", "retries after the first attempt"},

      {"preprocess.in", "", "dataset root to crop"},
      {"preprocess.catalog", "", "object catalog marking unpaired objects"},
      {"preprocess.side", "32", "output side in pixels"},

      {"augment.in", "", "directory of ground-truth images"},
      {"augment.blur_sigma", "1", "turbulence blur sigma (<= 0 disables)"},
      {"augment.sigma_glow", "0.05", "sky-glow noise sigma"},
      {"augment.brightness_mean", "0.9", "mean brightness factor"},
      {"augment.brightness_jitter", "0.05", "brightness factor sigma"},

      {"train.data", "", "dataset root; the train split is used"},
      {"train.catalog", "", "object catalog marking unpaired objects"},
      {"train.lr_dir", "", "flat directory of low-resolution images (overrides data)"},
      {"train.hr_dir", "", "flat directory of high-resolution images (overrides data)"},
      {"train.epochs", "1", "passes over the shorter pool"},
      {"train.batch", "4", "batch size"},
      {"train.side", "32", "training resolution (multiple of 8)"},
      {"train.max_steps", "0", "stop after this many steps (0: no limit)"},
      {"train.checkpoint_every", "0", "checkpoint interval in steps (0: final only)"},
      {"train.log_every", "1", "loss log interval in steps"},
      {"train.fusion", "optical_only", "optical_only, early_fusion_nir or volumetric"},
      {"train.bands", "3", "volumetric band count"},
      {"train.attention", "1", "attention gate in the generators"},
      {"train.lr", "0.0002", "Adam learning rate"},
      {"train.beta1", "0.5", "Adam beta1"},
      {"train.beta2", "0.999", "Adam beta2"},
      {"train.w_adv", "1", "adversarial loss weight"},
      {"train.w_cyc", "10", "cycle-consistency loss weight"},
      {"train.w_astro", "1", "astrophysical regularizer weight"},
      {"train.w_idt", "0", "identity loss weight"},
      {"train.w_paired", "0", "paired L1 weight"},
      {"train.resume", "", "checkpoint to continue from"},

      {"infer.checkpoint", "", "training checkpoint"},
      {"infer.in", "", "directory of input images"},

      {"evaluate.generated", "", "directory of generated images"},
      {"evaluate.reference", "", "directory of reference images"},
      {"evaluate.model", "strc", "model name in the report"},
      {"evaluate.features", "pixel_stats", "pixel_stats or fixed_random_conv"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

const std::string& RunConfig::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string& v = str(key);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + " must be a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t RunConfig::size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

double RunConfig::real(const std::string& key) const {
  const std::string& v = str(key);
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + " must be a number, got '" + v + "'");
  }
  return out;
}

bool RunConfig::boolean(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(key + " must be a boolean, got '" + v + "'");
}

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& k : config_keys()) out += k.key + "=" + values_.at(k.key) + "\n";
  return out;
}

}  // namespace strc
