#include "strc/model/model.hpp"

#include "strc/rng.hpp"

namespace strc {

std::string_view fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::optical_only: return "optical_only";
    case FusionMode::early_fusion_nir: return "early_fusion_nir";
    case FusionMode::volumetric: return "volumetric";
  }
  return "unknown";
}

FusionMode parse_fusion(std::string_view name) {
  if (name == "optical_only") return FusionMode::optical_only;
  if (name == "early_fusion_nir") return FusionMode::early_fusion_nir;
  if (name == "volumetric") return FusionMode::volumetric;
  throw ConfigError("unknown fusion mode '" + std::string(name) + "'");
}

std::size_t FusionConfig::lr_channels() const {
  switch (mode) {
    case FusionMode::optical_only: return 3;
    case FusionMode::early_fusion_nir: return 4;
    case FusionMode::volumetric: return bands;
  }
  return 3;
}

void FusionConfig::validate() const {
  if (mode == FusionMode::volumetric && bands != 3 && bands != 4) {
    throw ConfigError("volumetric fusion needs 3 or 4 bands, got " + std::to_string(bands));
  }
}

void GeneratorConfig::validate() const {
  if (in_channels == 0 || in_channels > 4) throw ConfigError("generator input channels must be 1..4");
  if (out_channels == 0 || out_channels > 4) throw ConfigError("generator output channels must be 1..4");
  if (!(slope >= 0)) throw ConfigError("LeakyReLU slope must be >= 0");
}

template <typename T>
Bound<T> bind_params(Graph<T>& g, const std::vector<ParamRef<T>>& params, bool trainable) {
  Bound<T> b;
  b.vars.reserve(params.size());
  for (const auto& p : params) b.vars.push_back(trainable ? g.leaf(*p.value) : g.constant(*p.value));
  return b;
}

template <typename T>
std::vector<Tensor<T>> gradients(const Graph<T>& g, const Bound<T>& bound) {
  std::vector<Tensor<T>> out;
  out.reserve(bound.vars.size());
  for (const auto& v : bound.vars) out.push_back(g.grad(v));
  return out;
}

template <typename T>
ConvLayer<T>::ConvLayer(ConvSpec s, bool transposed)
    : spec(s),
      transpose(transposed),
      weight(transposed ? s.transpose_weight_shape() : s.weight_shape(), T(0)),
      bias(Shape{s.out_channels}, T(0)) {
  spec.validate();
}

template <typename T>
NormLayer<T>::NormLayer(std::size_t channels)
    : gamma(Shape{channels}, T(1)), beta(Shape{channels}, T(0)), state(channels) {}

namespace {

template <typename T>
void init_conv(ConvLayer<T>& layer, std::uint64_t seed, const std::string& name) {
  Rng rng(derive_seed(seed, name));
  for (auto& v : layer.weight.data()) v = static_cast<T>(rng.normal(0.0, 0.02));
  layer.bias.fill(T(0));
}

template <typename T>
void init_norm(NormLayer<T>& layer, std::uint64_t seed, const std::string& name) {
  Rng rng(derive_seed(seed, name));
  for (auto& v : layer.gamma.data()) v = static_cast<T>(rng.normal(1.0, 0.02));
  layer.beta.fill(T(0));
  const auto c = layer.gamma.numel();
  layer.state = BatchNormState<T>(c);
}

template <typename T>
void push_conv(std::vector<ParamRef<T>>& out, const std::string& name, ConvLayer<T>& l) {
  out.push_back({name + ".weight", &l.weight});
  out.push_back({name + ".bias", &l.bias});
}

template <typename T>
void push_norm(std::vector<ParamRef<T>>& out, const std::string& name, NormLayer<T>& l) {
  out.push_back({name + ".gamma", &l.gamma});
  out.push_back({name + ".beta", &l.beta});
}

// Walks a Bound in parameters() order.
template <typename T>
struct Cursor {
  const Bound<T>& p;
  std::size_t i = 0;
  Var<T> next() { return p[i++]; }
};

template <typename T>
Var<T> apply(Cursor<T>& c, const ConvLayer<T>& l, Var<T> x) {
  const auto w = c.next();
  const auto b = c.next();
  return l.transpose ? ag::conv_transpose(x, w, b, l.spec) : ag::conv(x, w, b, l.spec);
}

template <typename T>
Var<T> apply(Cursor<T>& c, NormLayer<T>& l, Var<T> x, NormMode mode) {
  const auto gamma = c.next();
  const auto beta = c.next();
  return ag::batch_norm(x, gamma, beta, T(1e-5), mode, &l.state);
}

constexpr std::size_t kDown = 8;

}  // namespace

template <typename T>
Var<T> attention_map(Var<T> d3, Var<T> weight, Var<T> bias) {
  const auto& s = d3.shape();
  if (s.size() != 4) throw ShapeError("attention", "expects [N, C, h, w], got " + shape_str(s));
  const auto spec = ConvSpec::conv2d(s[1], 1, 1);
  return ag::sigmoid(ag::conv(d3, weight, bias, spec));
}

template <typename T>
Generator<T>::Generator(GeneratorConfig config) : config_(config) {
  config_.validate();
  const auto k4 = [](std::size_t cin, std::size_t cout) { return ConvSpec::conv2d(cin, cout, 4, 2, 1); };
  e1 = config_.volumetric ? ConvLayer<T>(ConvSpec::conv3d(1, 64, {3, 4, 4}, {1, 2, 2}, {1, 1, 1}), false)
                          : ConvLayer<T>(k4(config_.in_channels, 64), false);
  e2 = ConvLayer<T>(k4(64, 128), false);
  e3 = ConvLayer<T>(k4(128, 256), false);
  att = ConvLayer<T>(ConvSpec::conv2d(256, 1, 1), false);
  u1 = ConvLayer<T>(k4(256, 128), true);
  u2 = ConvLayer<T>(k4(128, 64), true);
  u3 = ConvLayer<T>(k4(64, config_.out_channels), true);
  n2 = NormLayer<T>(128);
  n3 = NormLayer<T>(256);
  nu1 = NormLayer<T>(128);
  nu2 = NormLayer<T>(64);
}

template <typename T>
std::vector<ParamRef<T>> Generator<T>::parameters() {
  std::vector<ParamRef<T>> out;
  push_conv(out, "e1", e1);
  push_conv(out, "e2", e2);
  push_norm(out, "e2.bn", n2);
  push_conv(out, "e3", e3);
  push_norm(out, "e3.bn", n3);
  push_conv(out, "att", att);
  push_conv(out, "u1", u1);
  push_norm(out, "u1.bn", nu1);
  push_conv(out, "u2", u2);
  push_norm(out, "u2.bn", nu2);
  push_conv(out, "u3", u3);
  return out;
}

template <typename T>
std::vector<ParamRef<T>> Generator<T>::buffers() {
  std::vector<ParamRef<T>> out;
  const auto push = [&](const std::string& name, NormLayer<T>& l) {
    out.push_back({name + ".running_mean", &l.state.running_mean});
    out.push_back({name + ".running_var", &l.state.running_var});
  };
  push("e2.bn", n2);
  push("e3.bn", n3);
  push("u1.bn", nu1);
  push("u2.bn", nu2);
  return out;
}

template <typename T>
void Generator<T>::init(std::uint64_t seed) {
  init_conv(e1, seed, "e1");
  init_conv(e2, seed, "e2");
  init_conv(e3, seed, "e3");
  init_conv(att, seed, "att");
  init_conv(u1, seed, "u1");
  init_conv(u2, seed, "u2");
  init_conv(u3, seed, "u3");
  init_norm(n2, seed, "e2.bn");
  init_norm(n3, seed, "e3.bn");
  init_norm(nu1, seed, "u1.bn");
  init_norm(nu2, seed, "u2.bn");
}

template <typename T>
void Generator<T>::check_input(const Shape& s) const {
  if (s.size() != 4) throw ShapeError("input", "generator expects [N, C, H, W], got " + shape_str(s));
  if (s[1] != config_.in_channels) {
    throw ShapeError("channels", "generator expects " + std::to_string(config_.in_channels) + " input channels, got " +
                                     std::to_string(s[1]));
  }
  if (s[2] % kDown || s[3] % kDown) {
    throw ShapeError("spatial", "height and width must be divisible by 8, got " + shape_str(s));
  }
}

template <typename T>
GeneratorOutput<T> Generator<T>::forward(Var<T> x, const Bound<T>& p, NormMode mode) {
  const Shape s = x.shape();
  check_input(s);
  if (p.vars.size() != 22) throw UsageError("generator: bound parameter count mismatch");
  const double slope = config_.slope;
  Cursor<T> c{p};

  Var<T> d1;
  if (config_.volumetric) {
    auto v = ag::reshape(x, Shape{s[0], 1, s[1], s[2], s[3]});
    d1 = ag::leaky_relu(ag::mean_axis(apply(c, e1, v), 2), slope);
  } else {
    d1 = ag::leaky_relu(apply(c, e1, x), slope);
  }
  auto d2 = apply(c, e2, d1);
  d2 = ag::leaky_relu(apply(c, n2, d2, mode), slope);
  auto d3 = apply(c, e3, d2);
  d3 = ag::leaky_relu(apply(c, n3, d3, mode), slope);

  GeneratorOutput<T> out;
  const auto aw = c.next();
  const auto ab = c.next();
  Var<T> gated = d3;
  if (config_.use_attention) {
    out.attention = attention_map(d3, aw, ab);
    gated = ag::mul_channel_broadcast(d3, out.attention);
  }

  auto h = apply(c, u1, gated);
  h = ag::add(ag::leaky_relu(apply(c, nu1, h, mode), slope), d2);
  h = apply(c, u2, h);
  h = ag::add(ag::leaky_relu(apply(c, nu2, h, mode), slope), d1);
  out.image = ag::tanh(apply(c, u3, h));
  return out;
}

template <typename T>
Tensor<T> Generator<T>::operator()(const Tensor<T>& x, NormMode mode) {
  Graph<T> g;
  const auto p = bind_params(g, parameters(), false);
  return forward(g.constant(x), p, mode).image.value();
}

template <typename T>
Discriminator<T>::Discriminator(std::size_t in_channels, double slope) : in_channels_(in_channels), slope_(slope) {
  if (in_channels == 0 || in_channels > 4) throw ConfigError("discriminator input channels must be 1..4");
  c1 = ConvLayer<T>(ConvSpec::conv2d(in_channels, 64, 4, 2, 1), false);
  c2 = ConvLayer<T>(ConvSpec::conv2d(64, 128, 4, 2, 1), false);
  c3 = ConvLayer<T>(ConvSpec::conv2d(128, 256, 4, 2, 1), false);
  c4 = ConvLayer<T>(ConvSpec::conv2d(256, 1, 4, 1, 1), false);
}

template <typename T>
std::vector<ParamRef<T>> Discriminator<T>::parameters() {
  std::vector<ParamRef<T>> out;
  push_conv(out, "c1", c1);
  push_conv(out, "c2", c2);
  push_conv(out, "c3", c3);
  push_conv(out, "c4", c4);
  return out;
}

template <typename T>
void Discriminator<T>::init(std::uint64_t seed) {
  init_conv(c1, seed, "c1");
  init_conv(c2, seed, "c2");
  init_conv(c3, seed, "c3");
  init_conv(c4, seed, "c4");
}

template <typename T>
Var<T> Discriminator<T>::forward(Var<T> x, const Bound<T>& p) {
  const Shape s = x.shape();
  if (s.size() != 4) throw ShapeError("input", "discriminator expects [N, C, H, W], got " + shape_str(s));
  if (s[1] != in_channels_) {
    throw ShapeError("channels", "discriminator expects " + std::to_string(in_channels_) + " channels, got " +
                                     std::to_string(s[1]));
  }
  if (p.vars.size() != 8) throw UsageError("discriminator: bound parameter count mismatch");
  Cursor<T> c{p};
  auto h = ag::leaky_relu(apply(c, c1, x), slope_);
  h = ag::leaky_relu(apply(c, c2, h), slope_);
  h = ag::leaky_relu(apply(c, c3, h), slope_);
  return ag::sigmoid(apply(c, c4, h));
}

template <typename T>
Tensor<T> Discriminator<T>::operator()(const Tensor<T>& x) {
  Graph<T> g;
  const auto p = bind_params(g, parameters(), false);
  return forward(g.constant(x), p).value();
}

template <typename T>
std::size_t Discriminator<T>::map_side(std::size_t side) {
  for (int i = 0; i < 3 && side >= 2; ++i) side = (side + 2 - 4) / 2 + 1;
  if (side < 2) throw ShapeError("spatial", "input too small for the discriminator");
  return side - 1;
}

#define STRC_INSTANTIATE(T)                                                                   \
  template struct ConvLayer<T>;                                                               \
  template struct NormLayer<T>;                                                               \
  template class Generator<T>;                                                                \
  template class Discriminator<T>;                                                            \
  template Bound<T> bind_params(Graph<T>&, const std::vector<ParamRef<T>>&, bool);                   \
  template std::vector<Tensor<T>> gradients(const Graph<T>&, const Bound<T>&);                \
  template Var<T> attention_map(Var<T>, Var<T>, Var<T>);

STRC_INSTANTIATE(float)
STRC_INSTANTIATE(double)
#undef STRC_INSTANTIATE

}  // namespace strc
