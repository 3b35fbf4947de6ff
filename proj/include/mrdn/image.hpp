#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mrdn/tensor.hpp"

namespace mrdn {

/// RGB image with values in [0, 1], stored planar as [3][height][width].
struct ImageRGB {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  ImageRGB() = default;
  ImageRGB(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(3 * h * w, fill) {}

  std::size_t plane() const { return height * width; }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  std::span<const double> channel(std::size_t c) const { return {data.data() + c * plane(), plane()}; }

  friend bool operator==(const ImageRGB&, const ImageRGB&) = default;
};

// Decodes PNG (8-bit RGB) or binary PPM (P6, maxval <= 255), chosen by the
// file signature. Throws DataError for unsupported, truncated or non-RGB input.
ImageRGB load_image(const std::filesystem::path& path);
ImageRGB decode_image(std::span<const std::uint8_t> bytes);

// Encodes by extension (.png or .ppm) and writes atomically. Values are
// clamped to [0, 1] and rounded half away from zero to 8 bits.
void save_image(const ImageRGB& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageRGB& img);
std::vector<std::uint8_t> encode_ppm(const ImageRGB& img);

std::uint8_t quantize(double v);
// Round-trips every value through 8-bit quantization.
ImageRGB quantized(const ImageRGB& img);

ImageRGB crop(const ImageRGB& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w);
// Largest centered crop whose extents are multiples of `multiple`.
ImageRGB center_crop_multiple(const ImageRGB& img, std::size_t multiple);
ImageRGB flip_horizontal(const ImageRGB& img);
// Rotates counter-clockwise by quarter_turns * 90 degrees.
ImageRGB rotate90(const ImageRGB& img, int quarter_turns);

// Batch of equally sized images -> (N, 3, H, W).
template <typename T>
Tensor<T> to_tensor(std::span<const ImageRGB> images);
template <typename T>
Tensor<T> to_tensor(const ImageRGB& image) {
  return to_tensor<T>(std::span<const ImageRGB>(&image, 1));
}
// Item n of an (N, 3, H, W) tensor, clamped to [0, 1].
template <typename T>
ImageRGB from_tensor(const Tensor<T>& t, std::size_t n = 0);

}  // namespace mrdn
