#pragma once

#include "strc/tensor/autograd.hpp"

namespace strc {

/// Mean binary cross-entropy of a discriminator map against "real" (1) or
/// "fake" (0). Probabilities are clamped to [1e-7, 1 - 1e-7].
template <typename T>
Var<T> adversarial_loss(Var<T> d_out, bool real);

/// Mean absolute error between an image and its reconstruction.
template <typename T>
Var<T> cycle_loss(Var<T> x, Var<T> reconstructed);

struct AstroLossOptions {
  std::size_t max_peaks = 5;
  double k_mad = 5.0;
  int window_half = 3;
};

/// Star-morphology regularizer on model-domain batches [N, C, H, W]:
///   |mean u_out - mean u_in| + (1/K) sum_k |c_out,k - c_in,k| / sqrt(H^2 + W^2)
/// with u = (x + 1) / 2, averaged over the batch. The K (<= max_peaks)
/// brightest peaks of the input luminance define the stars; each is matched
/// to the nearest peak of the output (or its own position if the output has
/// none). Centroids are weighted by max(L - median(L), 0) in a window around
/// the peak. Peak positions are treated as fixed; the gradient flows through
/// the centroid weights and the median background.
template <typename T>
Var<T> astro_loss(Var<T> x_in, Var<T> x_out, const AstroLossOptions& options = {});

}  // namespace strc
