#include "strc/training/inference.hpp"

#include <string>

namespace strc {

namespace fs = std::filesystem;

LoadedGenerator load_generator(const fs::path& checkpoint) {
  const auto meta = read_metadata(fs::path(checkpoint).replace_extension(".meta"));
  auto get = [&](const char* key) {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("checkpoint metadata lacks '") + key + "'");
    return it->second;
  };
  FusionConfig fusion;
  fusion.mode = parse_fusion(get("fusion"));
  try {
    fusion.bands = std::stoul(get("bands"));
  } catch (const std::logic_error&) {
    throw FormatError("bad 'bands' in checkpoint metadata");
  }
  fusion.validate();
  LoadedGenerator out{Generator<float>(GeneratorConfig{fusion.lr_channels(), 3, fusion.mode == FusionMode::volumetric,
                                                       get("attention") == "1"}),
                      fusion, meta};
  auto refs = out.g.parameters();
  auto bufs = out.g.buffers();
  refs.insert(refs.end(), bufs.begin(), bufs.end());
  restore(load_checkpoint(checkpoint), refs, "G.");
  return out;
}

Image enhance(Generator<float>& g, const Image& input) {
  if (input.channels != g.config().in_channels) {
    throw ShapeError("channels", "generator expects " + std::to_string(g.config().in_channels) + " channels, image has " +
                                     std::to_string(input.channels));
  }
  const Image unit = normalize(input, Domain::unit);
  const std::size_t h = (unit.height + 7) / 8 * 8, w = (unit.width + 7) / 8 * 8;
  std::vector<float> buf(unit.channels * h * w);
  for (std::size_t c = 0; c < unit.channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        buf[(c * h + y) * w + x] =
            static_cast<float>(2.0 * unit.at(c, std::min(y, unit.height - 1), std::min(x, unit.width - 1)) - 1.0);
  const Tensor<float> out = g(Tensor<float>(Shape{1, unit.channels, h, w}, std::move(buf)), NormMode::eval);

  Image img(3, unit.height, unit.width, Domain::unit);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < unit.height; ++y)
      for (std::size_t x = 0; x < unit.width; ++x)
        img.at(c, y, x) = std::clamp(0.5 * (static_cast<double>(out[(c * h + y) * w + x]) + 1.0), 0.0, 1.0);
  return img;
}

}  // namespace strc
