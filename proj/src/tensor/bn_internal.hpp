#pragma once

#include <vector>

#include "strc/tensor/functional.hpp"

namespace strc::detail {

template <typename T>
void check_bn_params(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

/// Normalizes with batch statistics; returns per-channel mean, 1/sqrt(var+eps)
/// and biased variance.
template <typename T>
void batch_norm_train_core(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                           Tensor<T>& out, std::vector<T>& mean, std::vector<T>& invstd, std::vector<T>& var);

/// EMA update; the running variance uses the unbiased batch estimate.
template <typename T>
void update_running_stats(BatchNormState<T>& state, const std::vector<T>& mean, const std::vector<T>& var,
                          std::size_t count);

}  // namespace strc::detail
