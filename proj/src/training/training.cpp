#include "strc/training/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "strc/rng.hpp"

namespace strc {

namespace fs = std::filesystem;

void LossWeights::validate() const {
  for (double w : {adv, cyc, astro, idt, paired}) {
    if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

void AdamConfig::validate() const {
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("Adam eps must be > 0");
}

Adam::Adam(AdamConfig config, const std::vector<ParamRef<float>>& params) : config_(config) {
  config_.validate();
  for (const auto& p : params) {
    m_.emplace_back(p.value->shape(), 0.0f);
    v_.emplace_back(p.value->shape(), 0.0f);
  }
}

void Adam::step(const std::vector<ParamRef<float>>& params, const std::vector<Tensor<float>>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw UsageError("Adam: parameter count mismatch");
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<float>& p = *params[k].value;
    const Tensor<float>& g = grads[k];
    if (g.shape() != p.shape()) throw ShapeError(params[k].name, "gradient shape " + shape_str(g.shape()));
    auto m = m_[k].data();
    auto v = v_[k].data();
    auto pd = p.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1 - b1) * gi;
      const double vi = b2 * v[i] + (1 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
      pd[i] = static_cast<float>(pd[i] - update);
    }
  }
}

std::vector<NamedTensor> Adam::state(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t k = 0; k < m_.size(); ++k) {
    out.push_back({prefix + "m." + std::to_string(k), m_[k]});
    out.push_back({prefix + "v." + std::to_string(k), v_[k]});
  }
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& stored, const std::string& prefix, std::uint64_t steps) {
  std::vector<ParamRef<float>> refs;
  for (std::size_t k = 0; k < m_.size(); ++k) {
    refs.push_back({"m." + std::to_string(k), &m_[k]});
    refs.push_back({"v." + std::to_string(k), &v_[k]});
  }
  restore(stored, refs, prefix);
  step_ = steps;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  if (side < 8 || side % 8) throw ConfigError("image side must be a positive multiple of 8, got " + std::to_string(side));
  if (log_every < 1) throw ConfigError("log cadence must be >= 1");
  fusion.validate();
  weights.validate();
  adam.validate();
  if (weights.idt > 0 && fusion.lr_channels() != 3) {
    throw ConfigError("identity loss needs 3-channel LR images; fusion mode " + std::string(fusion_name(fusion.mode)) +
                      " has " + std::to_string(fusion.lr_channels()));
  }
}

bool LossRecord::finite() const {
  for (double v : {d_hr, d_lr, g_adv, cyc, astro, idt, paired, g_total}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string LossRecord::format() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "step=%llu loss_d_hr=%.9g loss_d_lr=%.9g loss_g_adv=%.9g loss_cyc=%.9g loss_astro=%.9g "
                "loss_idt=%.9g loss_paired=%.9g loss_g=%.9g",
                static_cast<unsigned long long>(step), d_hr, d_lr, g_adv, cyc, astro, idt, paired, g_total);
  return buf;
}

LossRecord parse_loss_record(const std::string& line) {
  LossRecord r;
  std::istringstream in(line);
  std::string tok;
  bool has_step = false;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("log token without '=': " + tok);
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    try {
      if (key == "step") {
        r.step = std::stoull(val);
        has_step = true;
      } else if (key == "loss_d_hr") r.d_hr = std::stod(val);
      else if (key == "loss_d_lr") r.d_lr = std::stod(val);
      else if (key == "loss_g_adv") r.g_adv = std::stod(val);
      else if (key == "loss_cyc") r.cyc = std::stod(val);
      else if (key == "loss_astro") r.astro = std::stod(val);
      else if (key == "loss_idt") r.idt = std::stod(val);
      else if (key == "loss_paired") r.paired = std::stod(val);
      else if (key == "loss_g") r.g_total = std::stod(val);
    } catch (const std::logic_error&) {
      throw FormatError("bad value in log token: " + tok);
    }
  }
  if (!has_step) throw FormatError("log record without step: " + line);
  return r;
}

namespace {

std::vector<ParamRef<float>> prefixed(std::vector<ParamRef<float>> refs, const std::string& prefix) {
  for (auto& r : refs) r.name = prefix + r.name;
  return refs;
}

template <typename V>
void append(V& dst, V src) {
  dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
}

Var<float> weighted(Var<float> acc, Var<float> term, double w) {
  auto t = ag::scale(term, static_cast<float>(w));
  return acc.valid() ? ag::add(acc, t) : t;
}

}  // namespace

Trainer::Trainer(TrainConfig config)
    : g(GeneratorConfig{config.fusion.lr_channels(), 3, config.fusion.mode == FusionMode::volumetric,
                        config.use_attention}),
      f(GeneratorConfig{3, config.fusion.lr_channels(), false, config.use_attention}),
      d_hr(3),
      d_lr(config.fusion.lr_channels()),
      config_(config),
      opt_g_(config.adam, generator_params()),
      opt_d_(config.adam, discriminator_params()) {
  config_.validate();
  g.init(derive_seed(config_.seed, "G"));
  f.init(derive_seed(config_.seed, "F"));
  d_hr.init(derive_seed(config_.seed, "D_hr"));
  d_lr.init(derive_seed(config_.seed, "D_lr"));
}

std::vector<ParamRef<float>> Trainer::generator_params() {
  auto out = prefixed(g.parameters(), "G.");
  append(out, prefixed(f.parameters(), "F."));
  return out;
}

std::vector<ParamRef<float>> Trainer::discriminator_params() {
  auto out = prefixed(d_hr.parameters(), "D_hr.");
  append(out, prefixed(d_lr.parameters(), "D_lr."));
  return out;
}

std::vector<ParamRef<float>> Trainer::buffers() {
  auto out = prefixed(g.buffers(), "G.");
  append(out, prefixed(f.buffers(), "F."));
  return out;
}

LossRecord Trainer::step(const Tensor<float>& lr, const Tensor<float>& hr) {
  const auto& ls = lr.shape();
  const auto& hs = hr.shape();
  if (ls.size() != 4 || ls[1] != config_.fusion.lr_channels()) {
    throw ShapeError("lr", "expected [B, " + std::to_string(config_.fusion.lr_channels()) + ", S, S], got " + shape_str(ls));
  }
  if (hs.size() != 4 || hs[1] != 3) throw ShapeError("hr", "expected [B, 3, S, S], got " + shape_str(hs));

  const LossWeights& w = config_.weights;
  LossRecord rec;
  rec.step = step_ + 1;

  // Generator forward passes, kept on the tape for the generator update.
  Graph<float> gg;
  const auto gp = bind_params(gg, g.parameters(), true);
  const auto fp = bind_params(gg, f.parameters(), true);
  const auto x_lr = gg.constant(lr);
  const auto x_hr = gg.constant(hr);
  const auto fake_hr = g.forward(x_lr, gp, NormMode::train).image;
  const auto fake_lr = f.forward(x_hr, fp, NormMode::train).image;

  // Discriminators on real samples and detached fakes.
  {
    Graph<float> gd;
    const auto dhp = bind_params(gd, d_hr.parameters(), true);
    const auto dlp = bind_params(gd, d_lr.parameters(), true);
    auto half_bce = [&](Discriminator<float>& d, const Bound<float>& p, const Tensor<float>& real,
                        const Tensor<float>& fake) {
      const auto a = adversarial_loss(d.forward(gd.constant(real), p), true);
      const auto b = adversarial_loss(d.forward(gd.constant(fake), p), false);
      return ag::scale(ag::add(a, b), 0.5f);
    };
    const auto l_hr = half_bce(d_hr, dhp, hr, fake_hr.value());
    const auto l_lr = half_bce(d_lr, dlp, lr, fake_lr.value());
    rec.d_hr = l_hr.value().item();
    rec.d_lr = l_lr.value().item();
    if (!std::isfinite(rec.d_hr) || !std::isfinite(rec.d_lr)) {
      throw NumericError("non-finite discriminator loss: " + rec.format());
    }
    gd.backward(ag::add(l_hr, l_lr));
    auto grads = gradients(gd, dhp);
    append(grads, gradients(gd, dlp));
    opt_d_.step(discriminator_params(), grads);
  }

  // Generator objective against the updated discriminators.
  Var<float> total;
  if (w.adv > 0) {
    const auto dhp = bind_params(gg, d_hr.parameters(), false);
    const auto dlp = bind_params(gg, d_lr.parameters(), false);
    // Sequenced so the tape order does not depend on argument evaluation order.
    const auto adv_hr = adversarial_loss(d_hr.forward(fake_hr, dhp), true);
    const auto adv_lr = adversarial_loss(d_lr.forward(fake_lr, dlp), true);
    const auto adv = ag::add(adv_hr, adv_lr);
    rec.g_adv = adv.value().item();
    total = weighted(total, adv, w.adv);
  }
  if (w.cyc > 0) {
    const auto rec_lr = f.forward(fake_hr, fp, NormMode::train).image;
    const auto rec_hr = g.forward(fake_lr, gp, NormMode::train).image;
    const auto cyc_lr = cycle_loss(x_lr, rec_lr);
    const auto cyc = ag::add(cyc_lr, cycle_loss(x_hr, rec_hr));
    rec.cyc = cyc.value().item();
    total = weighted(total, cyc, w.cyc);
  }
  if (w.astro > 0) {
    auto optical = [](Var<float> v) { return v.shape()[1] == 3 ? v : ag::slice_channels(v, 0, 3); };
    const auto astro_hr = astro_loss(optical(x_lr), fake_hr);
    const auto astro = ag::add(astro_hr, astro_loss(x_hr, optical(fake_lr)));
    rec.astro = astro.value().item();
    total = weighted(total, astro, w.astro);
  }
  if (w.idt > 0) {
    const auto idt_hr = cycle_loss(x_hr, g.forward(x_hr, gp, NormMode::train).image);
    const auto idt = ag::add(idt_hr, cycle_loss(x_lr, f.forward(x_lr, fp, NormMode::train).image));
    rec.idt = idt.value().item();
    total = weighted(total, idt, w.idt);
  }
  if (w.paired > 0) {
    if (ls[0] != hs[0]) throw ShapeError("batch", "paired loss needs equal LR and HR batch sizes");
    const auto paired = cycle_loss(x_hr, fake_hr);
    rec.paired = paired.value().item();
    total = weighted(total, paired, w.paired);
  }
  if (!total.valid()) {
    // Every generator weight is zero: the generators are left untouched.
    ++step_;
    return rec;
  }
  rec.g_total = total.value().item();
  if (!rec.finite()) throw NumericError("non-finite generator loss: " + rec.format());

  gg.backward(total);
  auto grads = gradients(gg, gp);
  append(grads, gradients(gg, fp));
  opt_g_.step(generator_params(), grads);
  ++step_;
  return rec;
}

std::vector<NamedTensor> Trainer::state() {
  auto out = snapshot(generator_params(), "");
  append(out, snapshot(discriminator_params(), ""));
  append(out, snapshot(buffers(), ""));
  append(out, opt_g_.state("opt_g."));
  append(out, opt_d_.state("opt_d."));
  return out;
}

Metadata Trainer::metadata() const {
  return {
      {"version", STRC_VERSION},
      {"step", std::to_string(step_)},
      {"seed", std::to_string(config_.seed)},
      {"batch", std::to_string(config_.batch)},
      {"side", std::to_string(config_.side)},
      {"fusion", std::string(fusion_name(config_.fusion.mode))},
      {"bands", std::to_string(config_.fusion.bands)},
      {"attention", config_.use_attention ? "1" : "0"},
      {"opt_g_steps", std::to_string(opt_g_.steps())},
      {"opt_d_steps", std::to_string(opt_d_.steps())},
  };
}

fs::path Trainer::save(const fs::path& dir) {
  fs::create_directories(dir);
  char name[64];
  std::snprintf(name, sizeof name, "ckpt_%06llu.strc", static_cast<unsigned long long>(step_));
  const fs::path path = dir / name;
  save_checkpoint(path, state());
  write_metadata(fs::path(path).replace_extension(".meta"), metadata());
  return path;
}

void Trainer::load(const fs::path& checkpoint) {
  const auto meta = read_metadata(fs::path(checkpoint).replace_extension(".meta"));
  const auto mine = metadata();
  for (const char* key : {"seed", "batch", "side", "fusion", "bands", "attention"}) {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("checkpoint metadata lacks '") + key + "'");
    if (it->second != mine.at(key)) {
      throw ConfigError(std::string("checkpoint ") + key + "=" + it->second + " does not match configured " +
                        mine.at(key));
    }
  }
  auto number = [&](const char* key) -> std::uint64_t {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("checkpoint metadata lacks '") + key + "'");
    try {
      return std::stoull(it->second);
    } catch (const std::logic_error&) {
      throw FormatError(std::string("bad '") + key + "' in checkpoint metadata");
    }
  };
  const auto stored = load_checkpoint(checkpoint);
  restore(stored, generator_params(), "");
  restore(stored, discriminator_params(), "");
  restore(stored, buffers(), "");
  opt_g_.load_state(stored, "opt_g.", number("opt_g_steps"));
  opt_d_.load_state(stored, "opt_d.", number("opt_d_steps"));
  step_ = number("step");
}

std::size_t batches_per_epoch(const TrainConfig& config, const TrainData& data) {
  return std::min(data.lr.size(), data.hr.size()) / config.batch;
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

void check_pool(const std::vector<Image>& pool, std::size_t channels, std::size_t side, const char* name) {
  if (pool.empty()) throw ConfigError(std::string("no ") + name + " training images");
  for (const auto& img : pool) {
    if (img.channels != channels || img.height != side || img.width != side) {
      throw ConfigError(std::string(name) + " image is " + std::to_string(img.channels) + "x" +
                        std::to_string(img.height) + "x" + std::to_string(img.width) + ", expected " +
                        std::to_string(channels) + "x" + std::to_string(side) + "x" + std::to_string(side));
    }
  }
}

}  // namespace

BatchIndices batch_indices(const TrainConfig& config, const TrainData& data, std::uint64_t step) {
  const std::size_t bpe = batches_per_epoch(config, data);
  if (bpe == 0) throw ConfigError("fewer images than one batch");
  const std::uint64_t epoch = step / bpe;
  const std::size_t offset = static_cast<std::size_t>(step % bpe) * config.batch;
  const std::uint64_t es = derive_seed(derive_seed(config.seed, "batches"), epoch);
  const bool paired = config.weights.paired > 0;
  const auto plr = permutation(data.lr.size(), derive_seed(es, "lr"));
  const auto phr = paired ? plr : permutation(data.hr.size(), derive_seed(es, "hr"));
  BatchIndices b;
  b.lr.assign(plr.begin() + static_cast<long>(offset), plr.begin() + static_cast<long>(offset + config.batch));
  b.hr.assign(phr.begin() + static_cast<long>(offset), phr.begin() + static_cast<long>(offset + config.batch));
  return b;
}

Tensor<float> stack_batch(const std::vector<Image>& pool, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("empty batch");
  const Image& first = pool.at(indices[0]);
  Tensor<float> out(Shape{indices.size(), first.channels, first.height, first.width});
  const std::size_t per = first.data.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Image m = normalize(pool.at(indices[b]), Domain::model);
    if (!m.same_shape(first)) throw ShapeError("batch", "images in a batch must share one shape");
    for (std::size_t i = 0; i < per; ++i) out[b * per + i] = static_cast<float>(m.data[i]);
  }
  return out;
}

LoopResult train_loop(const TrainConfig& config, const TrainData& data, const LoopOptions& options) {
  config.validate();
  check_pool(data.lr, config.fusion.lr_channels(), config.side, "LR");
  check_pool(data.hr, 3, config.side, "HR");
  if (config.weights.paired > 0 && data.lr.size() != data.hr.size()) {
    throw ConfigError("paired loss needs as many LR as HR images");
  }
  const std::size_t bpe = batches_per_epoch(config, data);
  if (bpe == 0) throw ConfigError("batch size " + std::to_string(config.batch) + " exceeds the smaller image pool");
  std::uint64_t total = static_cast<std::uint64_t>(config.epochs) * bpe;
  if (config.max_steps) total = std::min<std::uint64_t>(total, config.max_steps);

  Trainer trainer(config);
  if (options.resume) trainer.load(*options.resume);

  fs::create_directories(options.out_dir);
  const fs::path ckpt_dir = options.out_dir / "checkpoints";
  std::ofstream log(options.out_dir / "train_log.txt", std::ios::app);
  std::ofstream timing(options.out_dir / "timing.txt", std::ios::app);
  if (!log || !timing) throw IoError("cannot open training logs in " + options.out_dir.string());

  LoopResult result;
  while (trainer.step_count() < total) {
    const auto idx = batch_indices(config, data, trainer.step_count());
    const auto t0 = std::chrono::steady_clock::now();
    LossRecord rec;
    try {
      rec = trainer.step(stack_batch(data.lr, idx.lr), stack_batch(data.hr, idx.hr));
    } catch (const NumericError&) {
      log << "step=" << trainer.step_count() + 1 << " status=non_finite\n";
      throw;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.step % config.log_every == 0 || rec.step == total) {
      log << rec.format() << '\n';
      log.flush();
      char buf[96];
      std::snprintf(buf, sizeof buf, "step=%llu wall_s=%.6f\n", static_cast<unsigned long long>(rec.step), secs);
      timing << buf;
    }
    result.records.push_back(rec);
    if (options.on_step) options.on_step(rec);
    if (config.checkpoint_every && rec.step % config.checkpoint_every == 0) {
      result.last_checkpoint = trainer.save(ckpt_dir);
    }
  }
  if (result.last_checkpoint.empty() || trainer.step_count() % std::max<std::size_t>(config.checkpoint_every, 1) != 0) {
    result.last_checkpoint = trainer.save(ckpt_dir);
  }
  return result;
}

}  // namespace strc
