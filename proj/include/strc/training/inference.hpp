#pragma once

#include <filesystem>

#include "strc/dataset/image.hpp"
#include "strc/model/checkpoint.hpp"
#include "strc/model/model.hpp"

namespace strc {

struct LoadedGenerator {
  Generator<float> g;
  FusionConfig fusion;
  Metadata meta;
};

/// Rebuilds the LR -> HR generator recorded in a training checkpoint and its
/// `.meta` sidecar.
LoadedGenerator load_generator(const std::filesystem::path& checkpoint);

/// Runs G in eval mode on one unit-domain image. Sides that are not
/// multiples of 8 are edge-padded and cropped back, so the output always
/// has the input's spatial size. Throws ShapeError on a channel mismatch.
Image enhance(Generator<float>& g, const Image& input);

}  // namespace strc
