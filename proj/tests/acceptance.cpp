// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. `acceptance 2 4` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "gradcheck.hpp"
#include "socket_trap.hpp"
#include "strc/augment/augment.hpp"
#include "strc/cli/cli.hpp"
#include "strc/metrics/metrics.hpp"
#include "strc/training/inference.hpp"
#include "strc/training/training.hpp"
#include "survey_fixtures.hpp"

using namespace strc;
using strc::testing::GradCheckResult;
using strc::testing::grad_check;
using strc::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path temp_dir(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("strc_accept_" + tag + "_" + std::to_string(getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradient suite

Var<double> weighted_sum(Graph<double>& g, Var<double> y, const Tensor<double>& w) {
  return ag::sum(ag::mul(y, g.constant(w)));
}

template <typename Net>
void scale_weights(Net& net, double s) {
  for (auto& p : net.parameters())
    if (p.name.find("weight") != std::string::npos)
      for (auto& v : p.value->data()) v *= s;
}

template <typename Net>
void shift_biases(Net& net, Rng& rng) {
  for (auto& p : net.parameters())
    if (p.name.find("weight") == std::string::npos)
      for (auto& v : p.value->data()) v += rng.normal(0, 0.5);
}

// Model-domain [1, C, 8, 8] frame with one noisy Gaussian star.
Tensor<double> star_frame(Rng& rng, std::size_t c) {
  const double cy = 2.5 + 3 * rng.uniform(), cx = 2.5 + 3 * rng.uniform(), amp = 0.5 + 0.4 * rng.uniform();
  Tensor<double> t(Shape{1, c, 8, 8});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double v = 0.1 + amp * std::exp(-(dy * dy + dx * dx) / 2.0);
        t[(ch * 8 + y) * 8 + x] = 2 * v - 1 + 0.02 * rng.normal();
      }
  return t;
}

struct GradCase {
  std::string name;
  std::function<GradCheckResult(Rng&)> run;
};

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  auto repeat = [&](const std::string& name, int n, std::function<GradCheckResult(Rng&)> fn) {
    for (int i = 0; i < n; ++i) cases.push_back({name + "#" + std::to_string(i), fn});
  };

  repeat("conv2d", 8, [](Rng& rng) {
    const auto spec = ConvSpec::conv2d(1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(2),
                                       rng.below(2));
    const auto x = random_tensor({1 + rng.below(2), spec.in_channels, 5 + rng.below(4), 5 + rng.below(4)}, rng);
    const auto w = random_tensor(spec.weight_shape(), rng);
    const auto b = random_tensor({spec.out_channels}, rng);
    const auto lw = random_tensor(conv_forward(x, spec, w, b).shape(), rng);
    return grad_check([&](Graph<double>& g, const std::vector<Var<double>>& v) {
      return weighted_sum(g, ag::conv(v[0], v[1], v[2], spec), lw);
    }, {x, w, b});
  });
  repeat("conv3d", 6, [](Rng& rng) {
    const auto spec = ConvSpec::conv3d(1 + rng.below(2), 1 + rng.below(2),
                                       {1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3)},
                                       {1 + rng.below(2), 1 + rng.below(2), 1 + rng.below(2)},
                                       {rng.below(2), rng.below(2), rng.below(2)});
    const auto x = random_tensor({1, spec.in_channels, 3 + rng.below(2), 4 + rng.below(3), 4 + rng.below(3)}, rng);
    const auto w = random_tensor(spec.weight_shape(), rng);
    const auto b = random_tensor({spec.out_channels}, rng);
    const auto lw = random_tensor(conv_forward(x, spec, w, b).shape(), rng);
    return grad_check([&](Graph<double>& g, const std::vector<Var<double>>& v) {
      return weighted_sum(g, ag::conv(v[0], v[1], v[2], spec), lw);
    }, {x, w, b});
  });
  repeat("conv_transpose", 6, [](Rng& rng) {
    const auto spec = ConvSpec::conv2d(1 + rng.below(3), 1 + rng.below(3), 2 + rng.below(3), 1 + rng.below(2),
                                       rng.below(2));
    const auto x = random_tensor({1 + rng.below(2), spec.in_channels, 3 + rng.below(3), 3 + rng.below(3)}, rng);
    const auto w = random_tensor(spec.transpose_weight_shape(), rng);
    const auto b = random_tensor({spec.out_channels}, rng);
    const auto lw = random_tensor(conv_transpose_forward(x, spec, w, b).shape(), rng);
    return grad_check([&](Graph<double>& g, const std::vector<Var<double>>& v) {
      return weighted_sum(g, ag::conv_transpose(v[0], v[1], v[2], spec), lw);
    }, {x, w, b});
  });
  repeat("batch_norm", 6, [](Rng& rng) {
    const std::size_t c = 1 + rng.below(3);
    const Shape s{2 + rng.below(2), c, 4, 4};
    const NormMode mode = rng.below(3) == 0 ? NormMode::eval : NormMode::train;
    BatchNormState<double> state(c);
    for (auto& v : state.running_mean.data()) v = rng.normal();
    for (auto& v : state.running_var.data()) v = 0.5 + rng.uniform();
    const auto lw = random_tensor(s, rng);
    return grad_check([&](Graph<double>& g, const std::vector<Var<double>>& v) {
      BatchNormState<double> scratch = state;
      return weighted_sum(g, ag::batch_norm(v[0], v[1], v[2], 1e-5, mode, &scratch), lw);
    }, {random_tensor(s, rng, 2.0), random_tensor({c}, rng), random_tensor({c}, rng)});
  });
  for (const auto& [name, a] : std::vector<std::pair<std::string, Activation>>{
           {"leaky_relu", Activation::leaky_relu(0.2)}, {"tanh", Activation::tanh()}, {"sigmoid", Activation::sigmoid()}}) {
    repeat(name, 3, [a = a](Rng& rng) {
      const Shape s{2, 1 + rng.below(3), 3, 3};
      const auto lw = random_tensor(s, rng);
      return grad_check([&](Graph<double>& g, const std::vector<Var<double>>& v) {
        return weighted_sum(g, ag::act(v[0], a), lw);
      }, {random_tensor(s, rng, 2.0)});
    });
  }
  repeat("attention", 4, [](Rng& rng) {
    const Shape s{1 + rng.below(2), 256, 1 + rng.below(2), 1 + rng.below(2)};
    const auto lw = random_tensor(s, rng);
    return grad_check([&](Graph<double>& g, const std::vector<Var<double>>& v) {
      return weighted_sum(g, ag::mul_channel_broadcast(v[0], attention_map(v[0], v[1], v[2])), lw);
    }, {random_tensor(s, rng), random_tensor({1, 256, 1, 1}, rng, 0.1), random_tensor({1}, rng)}, 24, rng.below(1000));
  });
  for (int variant = 0; variant < 3; ++variant) {
    cases.push_back({"generator#" + std::to_string(variant), [variant](Rng& rng) {
                       GeneratorConfig cfg;
                       cfg.volumetric = variant == 1;
                       cfg.use_attention = variant != 2;
                       Generator<double> net(cfg);
                       net.init(rng.below(1000));
                       scale_weights(net, 10.0);
                       shift_biases(net, rng);
                       const auto probe = random_tensor({1, 3, 8, 8}, rng);
                       std::vector<Tensor<double>> inputs{random_tensor({1, 3, 8, 8}, rng, 0.5)};
                       for (const auto& p : net.parameters()) inputs.push_back(*p.value);
                       return grad_check([&](Graph<double>& g, const std::vector<Var<double>>& v) {
                         Bound<double> b;
                         b.vars.assign(v.begin() + 1, v.end());
                         return weighted_sum(g, net.forward(v[0], b, NormMode::train).image, probe);
                       }, inputs, 8, rng.below(1000), 1e-5, 1e-4);
                     }});
  }
  repeat("discriminator", 2, [](Rng& rng) {
    Discriminator<double> net(3);
    net.init(rng.below(1000));
    scale_weights(net, 10.0);
    std::vector<Tensor<double>> inputs{random_tensor({1, 3, 24, 24}, rng, 0.5)};
    for (const auto& p : net.parameters()) inputs.push_back(*p.value);
    const bool real = rng.below(2) == 1;
    return grad_check([&](Graph<double>&, const std::vector<Var<double>>& v) {
      Bound<double> b;
      b.vars.assign(v.begin() + 1, v.end());
      return adversarial_loss(net.forward(v[0], b), real);
    }, inputs, 8, rng.below(1000));
  });
  repeat("adversarial_loss", 4, [](Rng& rng) {
    auto p = random_tensor({2, 1, 3, 3}, rng);
    for (auto& v : p.data()) v = 0.05 + 0.9 / (1 + std::exp(-v));
    const bool real = rng.below(2) == 1;
    return grad_check([real](Graph<double>&, const std::vector<Var<double>>& v) { return adversarial_loss(v[0], real); },
                      {p});
  });
  repeat("cycle_loss", 3, [](Rng& rng) {
    const Shape s{1, 3, 4 + rng.below(5), 4 + rng.below(5)};
    return grad_check([](Graph<double>&, const std::vector<Var<double>>& v) { return cycle_loss(v[0], v[1]); },
                      {random_tensor(s, rng), random_tensor(s, rng)});
  });
  repeat("astro_loss", 6, [](Rng& rng) {
    return grad_check([](Graph<double>&, const std::vector<Var<double>>& v) { return astro_loss(v[0], v[1]); },
                      {star_frame(rng, 3), star_frame(rng, 3)});
  });
  return cases;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  const auto cases = gradient_cases();
  Rng rng(20240601);
  Outcome o;
  double worst = 0;
  std::string worst_case;
  for (const auto& c : cases) {
    const auto r = c.run(rng);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_case = c.name + " " + r.worst;
    }
    if (!(r.max_rel_error <= 1e-4) || r.checked == 0) o.pass = false;
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && cases.size() >= 50 && secs < 60;
  o.detail = std::to_string(cases.size()) + " randomized cases, max rel error " + num(worst) + " (" + worst_case +
             "), " + num(secs, "%.1f") + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 2. Augmentation contract

Image random_image(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
  Image img(c, h, w, Domain::unit);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

Outcome criterion_augmentation() {
  Outcome o;
  Rng rng(36);
  std::size_t images = 0;
  for (int t = 0; t < 5; ++t) {
    const Image img = random_image(rng, 3, 8 + rng.below(17), 8 + rng.below(17));
    const std::uint64_t seed = rng.below(1u << 30);
    const auto a = augment_all(img, make_augment_plan(seed));
    const auto b = augment_all(img, make_augment_plan(seed));
    if (a.size() != kVariantsPerImage || a != b) o.pass = false;
    if (augment_all(img, make_augment_plan(seed + 1)) == a) o.pass = false;
    ++images;
  }

  // Dihedral elements (r, f) act as rot^r . flip^f; flip . rot^r = rot^-r . flip.
  const Image asym = random_image(rng, 1, 5, 7);
  std::vector<Image> elems;
  for (int f = 0; f < 2; ++f)
    for (int r = 0; r < 4; ++r) elems.push_back(dihedral(asym, r, f));
  std::size_t table_ok = 0;
  for (std::size_t i = 0; i < elems.size(); ++i)
    for (std::size_t j = 0; j < elems.size(); ++j)
      if (i != j && elems[i] == elems[j]) o.pass = false;
  for (int f1 = 0; f1 < 2; ++f1)
    for (int r1 = 0; r1 < 4; ++r1)
      for (int f2 = 0; f2 < 2; ++f2)
        for (int r2 = 0; r2 < 4; ++r2) {
          const int r = ((f2 ? r2 - r1 : r2 + r1) % 4 + 4) % 4;
          const bool f = (f1 + f2) % 2 == 1;
          if (dihedral(dihedral(asym, r1, f1), r2, f2) == dihedral(asym, r, f)) ++table_ok;
        }
  if (table_ok != 64) o.pass = false;

  double flux_err = 0;
  for (double sigma : {0.5, 1.0, 2.0, 3.0}) {
    const Image img = random_image(rng, 3, 17, 23);
    const Image out = gaussian_blur(img, sigma);
    double s_in = 0, s_out = 0;
    for (double v : img.data) s_in += v;
    for (double v : out.data) s_out += v;
    flux_err = std::max(flux_err, std::abs(s_out - s_in) / s_in);
  }
  if (!(flux_err <= 1e-6)) o.pass = false;

  const Image zero(1, 1000, 1000, Domain::unit, 0.0);
  const Image glow = sky_glow(zero, {0.05, 99});
  double mean = 0;
  for (double v : glow.data) mean += v;
  mean /= static_cast<double>(glow.data.size());
  const double expected = 0.05 / std::sqrt(2 * M_PI);
  const double glow_err = std::abs(mean - expected) / expected;
  if (!(glow_err <= 0.05)) o.pass = false;

  o.detail = std::to_string(images) + " inputs x 36 variants deterministic, dihedral table " + std::to_string(table_ok) +
             "/64, blur flux rel error " + num(flux_err) + ", sky-glow mean " + num(mean, "%.6f") + " vs " +
             num(expected, "%.6f") + " (" + num(100 * glow_err, "%.2f") + "%)";
  return o;
}

// ---------------------------------------------------------------------------
// 3. Generator conformance

Outcome criterion_generator() {
  Outcome o;
  Rng rng(4);
  double lo = 1, hi = -1, amin = 1, amax = 0;
  for (int t = 0; t < 100; ++t) {
    Generator<double> g;
    g.init(rng.below(1u << 30));
    scale_weights(g, 1 + 9 * rng.uniform());
    const std::size_t side = 8 * (1 + rng.below(3));
    const auto x = random_tensor({1 + rng.below(2), 3, side, side}, rng, 3.0);
    Graph<double> graph;
    const auto p = bind_params(graph, g.parameters(), false);
    const auto out = g.forward(graph.constant(x), p, t % 2 ? NormMode::train : NormMode::eval);
    if (out.image.shape() != Shape{x.shape()[0], 3, side, side}) o.pass = false;
    for (double v : out.image.value().data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (double v : out.attention.value().data()) {
      amin = std::min(amin, v);
      amax = std::max(amax, v);
    }
  }
  if (!(lo >= -1 && hi <= 1 && amin > 0 && amax < 1)) o.pass = false;

  Generator<double> zero;
  for (auto& p : zero.parameters()) p.value->fill(0);
  bool exact_zero = true;
  for (NormMode mode : {NormMode::train, NormMode::eval}) {
    const auto y = zero(random_tensor({2, 3, 16, 16}, rng), mode);
    for (double v : y.data()) exact_zero = exact_zero && v == 0.0;
  }
  if (!exact_zero) o.pass = false;

  o.detail = "100 draws: shapes ok, output range [" + num(lo, "%.6f") + ", " + num(hi, "%.6f") + "], attention range [" +
             num(amin, "%.3g") + ", " + num(amax, "%.9f") + "], zero weights -> " + (exact_zero ? "exact 0" : "non-zero");
  return o;
}

// ---------------------------------------------------------------------------
// 4. Frechet distance oracles

Outcome criterion_fid() {
  Outcome o;
  Rng rng(8);
  auto random_psd = [&](std::size_t n) {
    Matrix b(n, n);
    for (auto& v : b.v) v = rng.normal();
    return matmul(transpose(b), b);
  };

  FrechetStats a{{}, random_psd(8), 100};
  for (int i = 0; i < 8; ++i) a.mean.push_back(rng.normal());
  const double self = fid(a, a);

  FrechetStats p{std::vector<double>(4, 0.0), Matrix::identity(4), 10};
  FrechetStats q{{3, 0, 0, 0}, Matrix::identity(4), 10};
  const double shift = fid(p, q);

  const std::vector<double> d1{0.5, 1.0, 2.0, 4.0, 0.25}, d2{2.0, 3.0, 0.5, 1.0, 1.5};
  FrechetStats c1{{0.1, -0.2, 0.3, 0, 1}, Matrix::diagonal(d1), 10};
  FrechetStats c2{{0.4, 0.2, -0.3, 1, 0}, Matrix::diagonal(d2), 10};
  double closed = 0;
  for (std::size_t i = 0; i < d1.size(); ++i) {
    const double dm = c1.mean[i] - c2.mean[i];
    closed += dm * dm + d1[i] + d2[i] - 2 * std::sqrt(d1[i] * d2[i]);
  }
  const double diag_err = std::abs(fid(c1, c2) - closed);

  double sqrt_err = 0;
  for (int t = 0; t < 100; ++t) {
    const Matrix m = random_psd(8);
    const Matrix s = matrix_sqrt_psd(m);
    sqrt_err = std::max(sqrt_err, max_abs_diff(matmul(s, s), m));
  }
  o.pass = std::abs(self) <= 1e-6 && std::abs(shift - 9) <= 1e-6 && diag_err <= 1e-6 && sqrt_err <= 1e-8;
  o.detail = "fid(a,a)=" + num(self) + ", mean shift 3 -> " + num(shift, "%.12g") + ", diagonal case error " +
             num(diag_err) + ", sqrt reconstruction max " + num(sqrt_err);
  return o;
}

// ---------------------------------------------------------------------------
// 5. Desk-scale training run

Outcome criterion_desk_run() {
  Outcome o;
  const auto dir = temp_dir("desk");
  TrainData data;
  std::vector<StarFieldPair> held_out;
  for (std::size_t i = 0; i < 220; ++i) {
    StarFieldSpec spec;
    spec.side = 32;
    spec.seed = derive_seed(42, i);
    auto pair = synth_starfield(spec);
    if (i < 200) {
      data.lr.push_back(std::move(pair.degraded));
      data.hr.push_back(std::move(pair.clean));
    } else {
      held_out.push_back(std::move(pair));
    }
  }
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.batch = 4;
  cfg.side = 32;
  cfg.epochs = 10;
  cfg.max_steps = 300;

  const auto t0 = Clock::now();
  const auto res = train_loop(cfg, data, LoopOptions{dir, std::nullopt, nullptr});
  const double secs = seconds_since(t0);

  double early = 0, late = 0;
  std::size_t n_late = 0;
  for (const auto& r : res.records) {
    if (r.step <= 10) early += r.cyc;
    if (r.step >= 290 && r.step <= 300) {
      late += r.cyc;
      ++n_late;
    }
  }
  early /= 10;
  late /= static_cast<double>(n_late);

  auto model = load_generator(res.last_checkpoint);
  double psnr_gen = 0, psnr_deg = 0;
  for (const auto& pair : held_out) {
    psnr_gen += psnr(pair.clean, enhance(model.g, pair.degraded));
    psnr_deg += psnr(pair.clean, pair.degraded);
  }
  psnr_gen /= static_cast<double>(held_out.size());
  psnr_deg /= static_cast<double>(held_out.size());

  o.pass = res.records.size() == 300 && secs < 900 && late < 0.5 * early && psnr_gen - psnr_deg >= 1.0;
  o.detail = std::to_string(res.records.size()) + " steps in " + num(secs, "%.1f") + " s, cycle loss " +
             num(early, "%.4f") + " -> " + num(late, "%.4f") + " (" + num(100 * late / early, "%.1f") +
             "%), held-out PSNR " + num(psnr_gen, "%.2f") + " dB vs degraded " + num(psnr_deg, "%.2f") + " dB (+" +
             num(psnr_gen - psnr_deg, "%.2f") + ")";
  fs::remove_all(dir);
  return o;
}

// ---------------------------------------------------------------------------
// 6. Pipeline determinism

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.txt") continue;
    out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

Outcome criterion_pipeline() {
  Outcome o;
  const auto base = temp_dir("pipeline");
  const auto cwd = fs::current_path();
  const std::vector<std::vector<std::string>> steps{
      {"--offline", "--seed", "11", "synth", "--count", "12", "--side", "16", "--out", "synth"},
      {"--seed", "11", "augment", "--in", "synth/field/gt", "--out", "aug"},
      {"--seed", "11", "train", "--lr-dir", "synth/field/mobil", "--hr-dir", "aug", "--side", "16", "--batch", "4",
       "--epochs", "100", "--max-steps", "50", "--checkpoint-every", "25", "--out", "train"},
      {"--seed", "11", "infer", "--checkpoint", "train/checkpoints/ckpt_000050.strc", "--in", "synth/field/mobil",
       "--out", "gen"},
      {"--seed", "11", "evaluate", "--generated", "gen", "--reference", "synth/field/gt", "--out", "eval"},
  };
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    fs::create_directories(base / run);
    fs::current_path(base / run);
    for (const auto& args : steps) {
      if (run_cli(args, sink, sink) != 0) {
        o.pass = false;
        o.detail = std::string("step '") + args[3] + "' failed: " + sink.str();
      }
    }
    fs::current_path(cwd);
  }
  if (o.pass) {
    const auto a = tree(base / "a"), b = tree(base / "b");
    std::size_t differing = 0;
    for (const auto& [k, v] : a) differing += !b.count(k) || b.at(k) != v;
    o.pass = a.size() == b.size() && differing == 0 && a.count("train/checkpoints/ckpt_000050.strc") &&
             a.count("eval/report.csv");
    o.detail = std::to_string(a.size()) + " files compared (checkpoints, train_log, report), " +
               std::to_string(differing) + " differ; report: " +
               (a.count("eval/report.csv") ? a.at("eval/report.csv").substr(a.at("eval/report.csv").find('\n') + 1) : "")
                   .substr(0, 60);
    while (!o.detail.empty() && o.detail.back() == '\n') o.detail.pop_back();
  }
  fs::remove_all(base);
  return o;
}

// ---------------------------------------------------------------------------
// 7. Offline integrity

Outcome criterion_offline() {
  Outcome o;
  const auto dir = temp_dir("offline");
  std::vector<ObjectEntry> objects;
  for (auto& e : read_catalog(testing::kSourceDir / "config" / "catalog.txt"))
    if (e.paired) objects.push_back(e);
  const auto surveys = read_survey_catalog(testing::kSourceDir / "config" / "surveys.txt");
  const CutoutGeometry geo{0.5, 32, 32, "jpg"};
  const std::string base_url = "http://fixtures.invalid/hips2fits";
  const auto urls = testing::make_fixture_cache(dir / "cache", base_url, objects, surveys, geo);

  SurveyClientOptions opt;
  opt.mode = FetchMode::offline;
  opt.cache_dir = dir / "cache";
  opt.base_url = base_url;
  SurveyClient client(opt);
  const int sockets0 = testing::socket_calls.load(), connects0 = testing::connect_calls.load();
  std::size_t complete = 0;
  for (const auto& obj : objects) {
    const auto rep = fetch_object_references(client, obj, surveys, geo, dir / "data");
    complete += rep.failures.empty() && list_images(dir / "data" / obj.name / "gt").size() == surveys.size();
  }

  fs::remove(client.cache_path(urls[3]));
  fs::remove(client.cache_path(urls[7]));
  const auto partial = fetch_object_references(client, objects[0], surveys, geo, dir / "partial");
  const int sockets = testing::socket_calls.load() - sockets0, connects = testing::connect_calls.load() - connects0;

  // Positive control: the trap does see a live client.
  SurveyClientOptions live;
  live.mode = FetchMode::live;
  live.cache_dir = dir / "live";
  live.base_url = "http://127.0.0.1:9/hips2fits";
  live.retry.retries = 0;
  live.retry.timeout_s = 1;
  SurveyClient control(live);
  bool control_failed = false;
  try {
    control.fetch(CutoutRequest{surveys[0], 10, 10, 0.5, 32, 32, "jpg"});
  } catch (const NetworkError&) {
    control_failed = true;
  }
  const bool trap_live = control_failed && testing::socket_calls.load() - sockets0 > sockets;

  o.pass = objects.size() == 7 && complete == 7 && sockets == 0 && connects == 0 && client.network_calls() == 0 &&
           partial.written.size() == 8 && partial.failures.size() == 2 &&
           partial.failures[0].kind == "missing_fixture" && trap_live;
  o.detail = std::to_string(complete) + "/7 objects with " + std::to_string(surveys.size()) +
             " references each, socket()=" + std::to_string(sockets) + " connect()=" + std::to_string(connects) +
             ", partial run " + std::to_string(partial.written.size()) + " written + " +
             std::to_string(partial.failures.size()) + " per-survey failures, trap control " +
             (trap_live ? "fired" : "DID NOT FIRE");
  fs::remove_all(dir);
  return o;
}

// ---------------------------------------------------------------------------
// 8. Resume correctness

Outcome criterion_resume() {
  Outcome o;
  const auto dir = temp_dir("resume");
  TrainData data;
  for (std::size_t i = 0; i < 16; ++i) {
    StarFieldSpec spec;
    spec.side = 16;
    spec.seed = derive_seed(5, i);
    auto pair = synth_starfield(spec);
    data.lr.push_back(std::move(pair.degraded));
    data.hr.push_back(std::move(pair.clean));
  }
  TrainConfig cfg;
  cfg.seed = 9;
  cfg.batch = 2;
  cfg.side = 16;
  cfg.epochs = 10;
  cfg.max_steps = 40;
  const auto full = train_loop(cfg, data, LoopOptions{dir / "full", std::nullopt, nullptr});

  TrainConfig first = cfg;
  first.max_steps = 20;
  const auto part = train_loop(first, data, LoopOptions{dir / "part", std::nullopt, nullptr});
  const auto resumed = train_loop(cfg, data, LoopOptions{dir / "part", part.last_checkpoint, nullptr});

  std::size_t equal = 0;
  for (std::size_t i = 0; i < resumed.records.size() && 20 + i < full.records.size(); ++i)
    equal += resumed.records[i] == full.records[20 + i];
  const bool ckpt_same = slurp(full.last_checkpoint) == slurp(resumed.last_checkpoint);
  const bool log_same = slurp(dir / "full" / "train_log.txt") == slurp(dir / "part" / "train_log.txt");
  o.pass = resumed.records.size() == 20 && equal == 20 && ckpt_same && log_same;
  o.detail = "resumed at step " + std::to_string(part.records.size()) + ": " + std::to_string(equal) +
             "/20 loss records bit-identical, final checkpoint " + (ckpt_same ? "identical" : "differs") + ", log " +
             (log_same ? "identical" : "differs");
  fs::remove_all(dir);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion all[] = {
      {1, "gradient suite", criterion_gradients},   {2, "augmentation contract", criterion_augmentation},
      {3, "generator conformance", criterion_generator}, {4, "FID oracles", criterion_fid},
      {5, "desk-scale training", criterion_desk_run}, {6, "pipeline determinism", criterion_pipeline},
      {7, "offline integrity", criterion_offline},    {8, "resume correctness", criterion_resume},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
  }
  return failures ? 1 : 0;
}
