#pragma once

#include <cstddef>

#include "mrdn/tensor.hpp"

namespace mrdn {

/// Weights of a stride-1 convolution with "same" padding.
///
/// weight is (C_out, C_in, k, k) with k in {1, 3}; bias is stored as
/// (1, C_out, 1, 1). k = 3 pads by one pixel, k = 1 does not pad, so spatial
/// extents are always preserved.
template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;

  std::size_t in_channels() const { return weight.shape().c; }
  std::size_t out_channels() const { return weight.shape().n; }
  std::size_t kernel() const { return weight.shape().h; }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }

  // Fan-in scaled uniform weights in +-1/sqrt(C_in k k), zero bias, both
  // trainable.
  static ConvParams init(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                         Rng& rng);
  static ConvParams zeros(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

  void set_requires_grad(bool on) {
    weight.set_requires_grad(on);
    bias.set_requires_grad(on);
  }
};

/// Cross-correlation lowered to im2col + matrix multiply. Recorded on the tape;
/// backward yields gradients for x, weight and bias.
template <typename T>
Tensor<T> conv(const Tensor<T>& x, const ConvParams<T>& p);

/// Direct nested-loop cross-correlation with the same per-element accumulation
/// order as conv(). Forward only; used to cross-check the lowered path.
template <typename T>
Tensor<T> conv_direct(const Tensor<T>& x, const ConvParams<T>& p);

// (N, C*r*r, H, W) -> (N, C, r*H, r*W) with
// out[n, c, r*h+dy, r*w+dx] = in[n, c*r*r + dy*r + dx, h, w].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r);

// Exact inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r);

}  // namespace mrdn
