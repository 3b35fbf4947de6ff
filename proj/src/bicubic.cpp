#include "mrdn/bicubic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "mrdn/error.hpp"

namespace mrdn {

double bicubic_kernel(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

}  // namespace

double mirror_sum(std::span<const double> values) {
  double total = 0.0;
  std::size_t lo = 0;
  std::size_t hi = values.size();
  while (hi - lo >= 2) {
    total += values[lo] + values[hi - 1];
    ++lo;
    --hi;
  }
  if (hi > lo) total += values[lo];
  return total;
}

AxisTaps axis_taps(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw UsageError("bicubic: zero extent (" + std::to_string(in) +
                                            " -> " + std::to_string(out) + ")");
  // Output j sits at source coordinate ((2j + 1) in - out) / (2 out). Offsets to
  // source pixel i are kept as exact integers over 2 out, and the (stretched)
  // kernel argument is offset / (2 max(in, out)). Mirrored outputs therefore
  // get bitwise-mirrored weights.
  const auto n_in = static_cast<std::int64_t>(in);
  const auto n_out = static_cast<std::int64_t>(out);
  const std::int64_t denom = 2 * std::max(n_in, n_out);
  const std::int64_t reach = 2 * denom;  // |offset| <= 2 in kernel units
  const std::int64_t last = n_in - 1;

  AxisTaps taps;
  taps.offset.reserve(out + 1);
  taps.offset.push_back(0);
  std::vector<double> raw;
  for (std::int64_t j = 0; j < n_out; ++j) {
    const std::int64_t num = (2 * j + 1) * n_in - n_out;
    // Smallest and largest i with |num - 2 out i| <= reach.
    const std::int64_t first = ceil_div(num - reach, 2 * n_out);
    const std::int64_t end = floor_div(num + reach, 2 * n_out);
    raw.clear();
    for (std::int64_t i = first; i <= end; ++i) {
      raw.push_back(bicubic_kernel(static_cast<double>(num - 2 * n_out * i) / static_cast<double>(denom)));
    }
    const double total = mirror_sum(raw);
    for (std::int64_t i = first; i <= end; ++i) {
      taps.index.push_back(static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, last)));
      taps.weight.push_back(raw[static_cast<std::size_t>(i - first)] / total);
    }
    taps.offset.push_back(taps.index.size());
  }
  return taps;
}

namespace {

// dst[j * dst_stride] = sum_t w_t * src[index_t * src_stride] for every output j.
void resample_line(const AxisTaps& taps, const double* src, std::size_t src_stride, double* dst,
                   std::size_t dst_stride, std::vector<double>& scratch) {
  for (std::size_t j = 0; j < taps.outputs(); ++j) {
    scratch.clear();
    for (std::size_t t = taps.offset[j]; t < taps.offset[j + 1]; ++t) {
      scratch.push_back(taps.weight[t] * src[taps.index[t] * src_stride]);
    }
    dst[j * dst_stride] = mirror_sum(scratch);
  }
}

}  // namespace

std::vector<double> resize_plane(std::span<const double> src, std::size_t height,
                                 std::size_t width, std::size_t out_height, std::size_t out_width) {
  if (out_height == 0 || out_width == 0) {
    throw UsageError("bicubic_resize: target extent must be positive");
  }
  if (src.size() != height * width) throw ShapeError("bicubic_resize: plane size mismatch");
  const AxisTaps horizontal = axis_taps(width, out_width);
  const AxisTaps vertical = axis_taps(height, out_height);
  std::vector<double> scratch;

  std::vector<double> rows(height * out_width);
  for (std::size_t y = 0; y < height; ++y) {
    resample_line(horizontal, src.data() + y * width, 1, rows.data() + y * out_width, 1, scratch);
  }
  std::vector<double> dst(out_height * out_width);
  for (std::size_t x = 0; x < out_width; ++x) {
    resample_line(vertical, rows.data() + x, out_width, dst.data() + x, out_width, scratch);
  }
  return dst;
}

template <typename T>
Tensor<T> bicubic_resize_tensor(const Tensor<T>& x, std::size_t out_height, std::size_t out_width) {
  const Shape& s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, out_height, out_width});
  auto od = out.mutable_data();
  auto xd = x.data();
  std::vector<double> plane(s.plane());
  for (std::size_t k = 0; k < s.n * s.c; ++k) {
    std::copy_n(xd.begin() + k * s.plane(), s.plane(), plane.begin());
    const auto r = resize_plane(plane, s.h, s.w, out_height, out_width);
    for (std::size_t i = 0; i < r.size(); ++i) {
      od[k * r.size() + i] = static_cast<T>(std::clamp(r[i], 0.0, 1.0));
    }
  }
  return out;
}

template Tensor<float> bicubic_resize_tensor(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> bicubic_resize_tensor(const Tensor<double>&, std::size_t, std::size_t);

}  // namespace mrdn
