#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "strc/tensor/autograd.hpp"

namespace strc {

enum class FusionMode { optical_only, early_fusion_nir, volumetric };

std::string_view fusion_name(FusionMode m);
FusionMode parse_fusion(std::string_view name);

struct FusionConfig {
  FusionMode mode = FusionMode::optical_only;
  std::size_t bands = 3;  ///< depth of the volumetric stack (3 or 4)

  /// Channels of the low-resolution (input-side) images.
  std::size_t lr_channels() const;
  void validate() const;
};

/// Non-owning view of a named parameter or buffer.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
};

/// Parameters placed on a graph, in `parameters()` order.
template <typename T>
struct Bound {
  std::vector<Var<T>> vars;
  const Var<T>& operator[](std::size_t i) const { return vars.at(i); }
};

/// Records every parameter as a leaf (trainable) or constant.
template <typename T>
Bound<T> bind_params(Graph<T>& g, const std::vector<ParamRef<T>>& params, bool trainable);

/// Gradients of the last backward pass, aligned with `bound`.
template <typename T>
std::vector<Tensor<T>> gradients(const Graph<T>& g, const Bound<T>& bound);

template <typename T>
struct ConvLayer {
  ConvSpec spec;
  bool transpose = false;
  Tensor<T> weight;
  Tensor<T> bias;

  ConvLayer() = default;
  ConvLayer(ConvSpec s, bool transposed);
};

template <typename T>
struct NormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;

  NormLayer() = default;
  explicit NormLayer(std::size_t channels);
};

struct GeneratorConfig {
  std::size_t in_channels = 3;
  std::size_t out_channels = 3;
  bool volumetric = false;  ///< input bands become the depth axis of a 3-D first block
  bool use_attention = true;
  double slope = 0.2;

  void validate() const;
};

template <typename T>
struct GeneratorOutput {
  Var<T> image;      ///< [N, C_out, H, W] in (-1, 1)
  Var<T> attention;  ///< [N, 1, H/8, W/8]; invalid when attention is disabled
};

/// Encoder (three stride-2 blocks), sigmoid attention gate on the deepest
/// features, decoder with additive skips and a tanh head.
template <typename T>
class Generator {
 public:
  Generator() : Generator(GeneratorConfig{}) {}
  explicit Generator(GeneratorConfig config);

  const GeneratorConfig& config() const noexcept { return config_; }

  std::vector<ParamRef<T>> parameters();
  std::vector<ParamRef<T>> buffers();

  /// Weights ~ N(0, 0.02^2), biases 0, BN gamma ~ N(1, 0.02^2), beta 0.
  void init(std::uint64_t seed);

  /// x: [N, C_in, H, W] with H, W divisible by 8.
  GeneratorOutput<T> forward(Var<T> x, const Bound<T>& p, NormMode mode);
  /// Convenience forward with parameters bound as constants.
  Tensor<T> operator()(const Tensor<T>& x, NormMode mode = NormMode::eval);

  ConvLayer<T> e1, e2, e3, att, u1, u2, u3;
  NormLayer<T> n2, n3, nu1, nu2;

 private:
  void check_input(const Shape& s) const;
  GeneratorConfig config_;
};

/// Four k4 convolutions (strides 2, 2, 2, 1; padding 1) with channels
/// 64, 128, 256, 1; LeakyReLU after the first three and a sigmoid head.
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(std::size_t in_channels = 3, double slope = 0.2);

  std::size_t in_channels() const noexcept { return in_channels_; }
  std::vector<ParamRef<T>> parameters();
  void init(std::uint64_t seed);

  Var<T> forward(Var<T> x, const Bound<T>& p);
  Tensor<T> operator()(const Tensor<T>& x);

  /// Probability map size for a square input of `side`.
  static std::size_t map_side(std::size_t side);

  ConvLayer<T> c1, c2, c3, c4;

 private:
  std::size_t in_channels_;
  double slope_;
};

/// Sigmoid of a 1x1 convolution over d3 ([N, 256, h, w] -> [N, 1, h, w]).
template <typename T>
Var<T> attention_map(Var<T> d3, Var<T> weight, Var<T> bias);

extern template class Generator<float>;
extern template class Generator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace strc
