#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mrdn/tensor.hpp"

namespace mrdn {

// Keys cubic convolution kernel with a = -0.5.
double bicubic_kernel(double x);

/// Source taps and normalized weights for every output sample along one axis.
///
/// Output sample j maps to source coordinate (j + 0.5) * in / out - 0.5
/// (half-pixel centers). When shrinking, the kernel is stretched by in / out so
/// it also acts as the anti-aliasing filter. Indices are clamped to the edge
/// and each output's weights are divided by their sum.
struct AxisTaps {
  std::vector<std::size_t> offset;  // taps of output j: [offset[j], offset[j+1])
  std::vector<std::size_t> index;
  std::vector<double> weight;

  std::size_t outputs() const { return offset.empty() ? 0 : offset.size() - 1; }
};

AxisTaps axis_taps(std::size_t in, std::size_t out);

// Sums the values pairwise from both ends inwards, so reversing the input
// yields a bitwise-identical result.
double mirror_sum(std::span<const double> values);

/// Separable resize of one plane: rows first, then columns. No clamping.
/// Throws UsageError for zero target extents.
std::vector<double> resize_plane(std::span<const double> src, std::size_t height,
                                 std::size_t width, std::size_t out_height, std::size_t out_width);

/// Resizes every plane of x to (out_height, out_width) and clamps to [0, 1].
/// The result does not participate in the tape.
template <typename T>
Tensor<T> bicubic_resize_tensor(const Tensor<T>& x, std::size_t out_height, std::size_t out_width);

}  // namespace mrdn
