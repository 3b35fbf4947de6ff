#include <gtest/gtest.h>

#include <algorithm>
#include <array>

#include "mrdn/bicubic.hpp"
#include "mrdn/data.hpp"
#include "mrdn/error.hpp"
#include "oracles.hpp"

using namespace mrdn;

namespace {

std::vector<double> random_plane(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(h * w);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> mirror_columns(const std::vector<double>& p, std::size_t h, std::size_t w) {
  std::vector<double> out(p.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = p[y * w + (w - 1 - x)];
  }
  return out;
}

}  // namespace

TEST(Bicubic, KernelKnownValues) {
  EXPECT_DOUBLE_EQ(bicubic_kernel(0.0), 1.0);
  EXPECT_DOUBLE_EQ(bicubic_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(bicubic_kernel(1.0), 0.0);
  EXPECT_DOUBLE_EQ(bicubic_kernel(1.5), -0.0625);
  EXPECT_DOUBLE_EQ(bicubic_kernel(2.0), 0.0);
  EXPECT_DOUBLE_EQ(bicubic_kernel(-0.5), bicubic_kernel(0.5));
  for (double x = -2.5; x <= 2.5; x += 0.125) EXPECT_DOUBLE_EQ(bicubic_kernel(x), oracle::keys(x));
}

TEST(Bicubic, TapWeightsNormalized) {
  for (auto [in, out] : {std::pair<std::size_t, std::size_t>{8, 16}, {16, 8}, {17, 4}, {5, 5}, {3, 24}}) {
    const AxisTaps taps = axis_taps(in, out);
    ASSERT_EQ(taps.outputs(), out);
    for (std::size_t j = 0; j < out; ++j) {
      double s = 0.0;
      for (std::size_t t = taps.offset[j]; t < taps.offset[j + 1]; ++t) {
        s += taps.weight[t];
        EXPECT_LT(taps.index[t], in);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Bicubic, ConstantImagesPreserved) {
  for (auto [oh, ow] : {std::pair<std::size_t, std::size_t>{24, 20}, {3, 5}, {12, 10}}) {
    const std::vector<double> flat(12 * 10, 0.3125);
    for (double v : resize_plane(flat, 12, 10, oh, ow)) EXPECT_NEAR(v, 0.3125, 1e-14);
  }
}

TEST(Bicubic, SameSizeIsIdentity) {
  const auto p = random_plane(7, 9, 1);
  const auto q = resize_plane(p, 7, 9, 7, 9);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(q[i], p[i], 1e-15);
}

TEST(Bicubic, SeparableMatchesBrute2D) {
  const std::vector<std::array<std::size_t, 4>> cases{
      {8, 8, 16, 16}, {16, 16, 8, 8}, {17, 13, 4, 3}, {6, 9, 12, 5}, {32, 32, 8, 8}, {5, 7, 40, 56}};
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    const auto p = random_plane(c[0], c[1], seed++);
    const auto got = resize_plane(p, c[0], c[1], c[2], c[3]);
    const auto want = oracle::brute_resize(p, c[0], c[1], c[2], c[3]);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << c[0] << "x" << c[1];
  }
}

TEST(Bicubic, HorizontalFlipCommutesBitwise) {
  for (auto [oh, ow] : {std::pair<std::size_t, std::size_t>{5, 4}, {20, 16}, {10, 7}}) {
    const auto p = random_plane(10, 8, 3 + oh);
    const auto a = mirror_columns(resize_plane(p, 10, 8, oh, ow), oh, ow);
    const auto b = resize_plane(mirror_columns(p, 10, 8), 10, 8, oh, ow);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
  }
}

TEST(Bicubic, MirrorSumReversalInvariant) {
  const auto v = random_plane(1, 11, 4);
  std::vector<double> r(v.rbegin(), v.rend());
  EXPECT_EQ(mirror_sum(v), mirror_sum(r));
  EXPECT_EQ(mirror_sum(std::vector<double>{}), 0.0);
}

TEST(Bicubic, ZeroTargetRejected) {
  const auto p = random_plane(4, 4, 5);
  EXPECT_THROW(resize_plane(p, 4, 4, 0, 4), UsageError);
  EXPECT_THROW(bicubic_resize(ImageRGB(4, 4), 4, 0), UsageError);
}

TEST(Bicubic, TensorResizeClampsAndSkipsTape) {
  Tensor<double> x(Shape{1, 3, 2, 2}, std::vector<double>(12, 0.0));
  auto d = x.mutable_data();
  for (std::size_t c = 0; c < 3; ++c) d[c * 4] = 1.0;  // hard step overshoots
  x.set_requires_grad(true);
  const auto y = bicubic_resize_tensor(x, 8, 8);
  EXPECT_FALSE(y.requires_grad());
  for (double v : y.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Bicubic, DownscaleIsAntialiased) {
  // A one-pixel checkerboard averages out when shrunk by 4.
  ImageRGB img(16, 16);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) img.at(c, y, x) = ((x + y) % 2) ? 1.0 : 0.0;
    }
  }
  const ImageRGB small = degrade_bi(img, 4);
  for (double v : small.data) EXPECT_NEAR(v, 0.5, 0.02);
}
