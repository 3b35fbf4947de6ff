#include "mrdn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mrdn/error.hpp"

namespace mrdn {

namespace {

template <typename T>
void check_conv(const Tensor<T>& x, const ConvParams<T>& p) {
  const Shape& ws = p.weight.shape();
  if (ws.h != ws.w || (ws.h != 1 && ws.h != 3)) {
    throw ShapeError("conv: unsupported kernel " + ws.str() + ", expected k in {1, 3}");
  }
  if (p.bias.numel() != ws.n) {
    throw ShapeError("conv: bias " + p.bias.shape().str() + " does not match weight " + ws.str());
  }
  if (x.shape().c != ws.c) {
    throw ShapeError("conv: input has " + std::to_string(x.shape().c) +
                     " channels, weight expects " + std::to_string(ws.c));
  }
}

// Valid output range [lo, hi) along one axis for a tap offset d = k - pad.
inline void valid_range(std::ptrdiff_t d, std::size_t extent, std::size_t& lo, std::size_t& hi) {
  const auto e = static_cast<std::ptrdiff_t>(extent);
  lo = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(-d, 0, e));
  hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(e - d, 0, e));
}

// col[(c*k*k + ky*k + kx) * H*W + y*W + x] = x[c, y+ky-pad, x+kx-pad], zero outside.
template <typename T>
void im2col(const T* src, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, T* col) {
  const std::size_t plane = height * width;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* in = src + c * plane;
    for (std::size_t ky = 0; ky < k; ++ky) {
      const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
      std::size_t y0, y1;
      valid_range(dy, height, y0, y1);
      for (std::size_t kx = 0; kx < k; ++kx, ++row) {
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        std::size_t x0, x1;
        valid_range(dx, width, x0, x1);
        T* out = col + row * plane;
        std::fill(out, out + plane, T{0});
        for (std::size_t y = y0; y < y1; ++y) {
          const T* in_row = in + (y + dy) * width + dx;
          T* out_row = out + y * width;
          for (std::size_t x = x0; x < x1; ++x) out_row[x] = in_row[x];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t height, std::size_t width,
                std::size_t k, T* dst) {
  const std::size_t plane = height * width;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    T* out = dst + c * plane;
    for (std::size_t ky = 0; ky < k; ++ky) {
      const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
      std::size_t y0, y1;
      valid_range(dy, height, y0, y1);
      for (std::size_t kx = 0; kx < k; ++kx, ++row) {
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        std::size_t x0, x1;
        valid_range(dx, width, x0, x1);
        const T* in = col + row * plane;
        for (std::size_t y = y0; y < y1; ++y) {
          T* out_row = out + (y + dy) * width + dx;
          const T* in_row = in + y * width;
          for (std::size_t x = x0; x < x1; ++x) out_row[x] += in_row[x];
        }
      }
    }
  }
}

// Four partial sums combined in a fixed tree, so the result only depends on
// the inputs.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T s0{0}, s1{0}, s2{0}, s3{0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// out[m, :] = sum_k w[m, k] * col[k, :] + bias[m], accumulated in ascending k.
template <typename T>
void gemm_bias(const T* w, const T* bias, const T* col, std::size_t rows, std::size_t depth,
               std::size_t cols, T* out) {
  std::size_t m = 0;
  for (; m + 4 <= rows; m += 4) {
    T* o0 = out + m * cols;
    T* o1 = o0 + cols;
    T* o2 = o1 + cols;
    T* o3 = o2 + cols;
    std::fill(o0, o0 + 4 * cols, T{0});
    const T* w0 = w + m * depth;
    for (std::size_t k = 0; k < depth; ++k) {
      const T a0 = w0[k];
      const T a1 = w0[depth + k];
      const T a2 = w0[2 * depth + k];
      const T a3 = w0[3 * depth + k];
      const T* c = col + k * cols;
      for (std::size_t p = 0; p < cols; ++p) {
        const T v = c[p];
        o0[p] += a0 * v;
        o1[p] += a1 * v;
        o2[p] += a2 * v;
        o3[p] += a3 * v;
      }
    }
    for (std::size_t j = 0; j < 4; ++j) {
      const T b = bias[m + j];
      T* o = o0 + j * cols;
      for (std::size_t p = 0; p < cols; ++p) o[p] += b;
    }
  }
  for (; m < rows; ++m) {
    T* o = out + m * cols;
    std::fill(o, o + cols, T{0});
    const T* wr = w + m * depth;
    for (std::size_t k = 0; k < depth; ++k) {
      const T a = wr[k];
      const T* c = col + k * cols;
      for (std::size_t p = 0; p < cols; ++p) o[p] += a * c[p];
    }
    const T b = bias[m];
    for (std::size_t p = 0; p < cols; ++p) o[p] += b;
  }
}

}  // namespace

template <typename T>
ConvParams<T> ConvParams<T>::init(std::size_t in_channels, std::size_t out_channels,
                                  std::size_t kernel, Rng& rng) {
  const T bound = T{1} / std::sqrt(static_cast<T>(in_channels * kernel * kernel));
  ConvParams p;
  p.weight = Tensor<T>::uniform(Shape{out_channels, in_channels, kernel, kernel}, -bound, bound,
                                rng);
  p.bias = Tensor<T>::zeros(Shape{1, out_channels, 1, 1});
  p.set_requires_grad(true);
  return p;
}

template <typename T>
ConvParams<T> ConvParams<T>::zeros(std::size_t in_channels, std::size_t out_channels,
                                   std::size_t kernel) {
  ConvParams p;
  p.weight = Tensor<T>::zeros(Shape{out_channels, in_channels, kernel, kernel});
  p.bias = Tensor<T>::zeros(Shape{1, out_channels, 1, 1});
  p.set_requires_grad(true);
  return p;
}

template <typename T>
Tensor<T> conv(const Tensor<T>& x, const ConvParams<T>& p) {
  check_conv(x, p);
  const Shape& xs = x.shape();
  const std::size_t k = p.kernel();
  const std::size_t cout = p.out_channels();
  const std::size_t depth = xs.c * k * k;
  const std::size_t plane = xs.plane();

  Tensor<T> out(Shape{xs.n, cout, xs.h, xs.w});
  std::vector<T> col(k == 1 ? 0 : depth * plane);
  {
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* src = xd.data() + n * xs.item();
      if (k != 1) im2col(src, xs.c, xs.h, xs.w, k, col.data());
      gemm_bias(p.weight.data().data(), p.bias.data().data(), k == 1 ? src : col.data(), cout,
                depth, plane, od.data() + n * cout * plane);
    }
  }

  Tensor<T> w = p.weight;
  Tensor<T> b = p.bias;
  record_op<T>(out, {&x, &w, &b}, [x, w, b, k, cout, depth, plane](std::span<const T> g) mutable {
    const Shape& xs = x.shape();
    std::vector<T> col(k == 1 ? 0 : depth * plane);
    std::vector<T> dcol(x.requires_grad() ? depth * plane : 0);
    const T* wd = w.data().data();
    auto xd = x.data();
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* gn = g.data() + n * cout * plane;
      if (b.requires_grad()) {
        auto gb = b.grad_accumulator();
        for (std::size_t m = 0; m < cout; ++m) {
          T s{0};
          const T* gm = gn + m * plane;
          for (std::size_t i = 0; i < plane; ++i) s += gm[i];
          gb[m] += s;
        }
      }
      const T* src = xd.data() + n * xs.item();
      if (w.requires_grad()) {
        if (k != 1) im2col(src, xs.c, xs.h, xs.w, k, col.data());
        const T* cd = k == 1 ? src : col.data();
        auto gw = w.grad_accumulator();
        for (std::size_t m = 0; m < cout; ++m) {
          const T* gm = gn + m * plane;
          for (std::size_t kk = 0; kk < depth; ++kk) {
            gw[m * depth + kk] += dot(gm, cd + kk * plane, plane);
          }
        }
      }
      if (x.requires_grad()) {
        std::fill(dcol.begin(), dcol.end(), T{0});
        for (std::size_t kk = 0; kk < depth; ++kk) {
          T* dr = dcol.data() + kk * plane;
          for (std::size_t m = 0; m < cout; ++m) {
            const T a = wd[m * depth + kk];
            const T* gm = gn + m * plane;
            for (std::size_t i = 0; i < plane; ++i) dr[i] += a * gm[i];
          }
        }
        T* gx = x.grad_accumulator().data() + n * xs.item();
        if (k == 1) {
          for (std::size_t i = 0; i < depth * plane; ++i) gx[i] += dcol[i];
        } else {
          col2im_add(dcol.data(), xs.c, xs.h, xs.w, k, gx);
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv_direct(const Tensor<T>& x, const ConvParams<T>& p) {
  check_conv(x, p);
  const Shape& xs = x.shape();
  const std::size_t k = p.kernel();
  const std::size_t cout = p.out_channels();
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor<T> out(Shape{xs.n, cout, xs.h, xs.w});
  auto od = out.mutable_data();
  auto xd = x.data();
  auto wd = p.weight.data();
  auto bd = p.bias.data();
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t m = 0; m < cout; ++m) {
      T* acc = od.data() + (n * cout + m) * xs.plane();
      for (std::size_t c = 0; c < xs.c; ++c) {
        const T* in = xd.data() + (n * xs.c + c) * xs.plane();
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const T wv = wd[((m * xs.c + c) * k + ky) * k + kx];
            for (std::size_t y = 0; y < xs.h; ++y) {
              const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(xs.h)) continue;
              for (std::size_t xx = 0; xx < xs.w; ++xx) {
                const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - pad;
                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(xs.w)) continue;
                acc[y * xs.w + xx] += wv * in[sy * static_cast<std::ptrdiff_t>(xs.w) + sx];
              }
            }
          }
        }
      }
      for (std::size_t i = 0; i < xs.plane(); ++i) acc[i] += bd[m];
    }
  }
  return out;
}

namespace {

// Calls f(shuffled_index, unshuffled_index) for every element of the
// low-resolution layout `lo` (N, C*r*r, H, W).
template <typename F>
void for_each_shuffle(const Shape& lo, std::size_t r, F&& f) {
  const std::size_t c_out = lo.c / (r * r);
  const std::size_t ho = lo.h * r;
  const std::size_t wo = lo.w * r;
  for (std::size_t n = 0; n < lo.n; ++n) {
    for (std::size_t c = 0; c < c_out; ++c) {
      for (std::size_t dy = 0; dy < r; ++dy) {
        for (std::size_t dx = 0; dx < r; ++dx) {
          const std::size_t ci = c * r * r + dy * r + dx;
          for (std::size_t h = 0; h < lo.h; ++h) {
            for (std::size_t w = 0; w < lo.w; ++w) {
              const std::size_t hi_idx = ((n * c_out + c) * ho + r * h + dy) * wo + r * w + dx;
              const std::size_t lo_idx = ((n * lo.c + ci) * lo.h + h) * lo.w + w;
              f(hi_idx, lo_idx);
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  if (r == 0 || s.c % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  }
  Tensor<T> out(Shape{s.n, s.c / (r * r), s.h * r, s.w * r});
  auto o = out.mutable_data();
  auto in = x.data();
  for_each_shuffle(s, r, [&](std::size_t hi, std::size_t lo) { o[hi] = in[lo]; });
  record_op<T>(out, {&x}, [x, r](std::span<const T> g) mutable {
    auto gx = x.grad_accumulator();
    for_each_shuffle(x.shape(), r, [&](std::size_t hi, std::size_t lo) { gx[lo] += g[hi]; });
  });
  return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  if (r == 0 || s.h % r != 0 || s.w % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial extent " + s.str() + " not divisible by " +
                     std::to_string(r));
  }
  const Shape lo{s.n, s.c * r * r, s.h / r, s.w / r};
  Tensor<T> out(lo);
  auto o = out.mutable_data();
  auto in = x.data();
  for_each_shuffle(lo, r, [&](std::size_t hi, std::size_t l) { o[l] = in[hi]; });
  record_op<T>(out, {&x}, [x, r, lo](std::span<const T> g) mutable {
    auto gx = x.grad_accumulator();
    for_each_shuffle(lo, r, [&](std::size_t hi, std::size_t l) { gx[hi] += g[l]; });
  });
  return out;
}

#define MRDN_INSTANTIATE(T)                                                \
  template struct ConvParams<T>;                                           \
  template Tensor<T> conv<T>(const Tensor<T>&, const ConvParams<T>&);      \
  template Tensor<T> conv_direct<T>(const Tensor<T>&, const ConvParams<T>&); \
  template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, std::size_t);      \
  template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, std::size_t);

MRDN_INSTANTIATE(float)
MRDN_INSTANTIATE(double)

#undef MRDN_INSTANTIATE

}  // namespace mrdn
