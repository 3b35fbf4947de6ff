#include "mrdn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>

#include "mrdn/checkpoint.hpp"
#include "mrdn/error.hpp"

namespace mrdn {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

ImageRGB from_interleaved(const std::uint8_t* px, std::size_t h, std::size_t w, double maxval) {
  ImageRGB img(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = px[(y * w + x) * 3 + c] / maxval;
    }
  }
  return img;
}

std::vector<std::uint8_t> to_interleaved(const ImageRGB& img) {
  std::vector<std::uint8_t> px(img.plane() * 3);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) px[(y * img.width + x) * 3 + c] = quantize(img.at(c, y, x));
    }
  }
  return px;
}

ImageRGB decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError(std::string("png: ") + image.message);
  }
  if ((image.format & PNG_FORMAT_FLAG_COLOR) == 0 || (image.format & PNG_FORMAT_FLAG_ALPHA) != 0 ||
      (image.format & PNG_FORMAT_FLAG_LINEAR) != 0) {
    png_image_free(&image);
    throw DataError("png: only 8-bit RGB images are supported");
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    throw DataError(std::string("png: ") + image.message);
  }
  return from_interleaved(px.data(), image.height, image.width, 255.0);
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
    tok.push_back(static_cast<char>(bytes[pos++]));
  }
  if (tok.empty()) throw DataError("ppm: truncated header");
  return tok;
}

std::size_t ppm_number(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  const std::string tok = ppm_token(bytes, pos);
  if (!std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(ch) != 0; }) ||
      tok.size() > 9) {
    throw DataError("ppm: malformed header field '" + tok + "'");
  }
  return std::stoul(tok);
}

ImageRGB decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  const std::size_t w = ppm_number(bytes, pos);
  const std::size_t h = ppm_number(bytes, pos);
  const std::size_t maxval = ppm_number(bytes, pos);
  if (w == 0 || h == 0) throw DataError("ppm: zero image extent");
  if (maxval == 0 || maxval > 255) {
    throw DataError("ppm: unsupported maxval " + std::to_string(maxval));
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DataError("ppm: truncated header");
  ++pos;
  if (bytes.size() - pos < w * h * 3) throw DataError("ppm: truncated pixel data");
  return from_interleaved(bytes.data() + pos, h, w, static_cast<double>(maxval));
}

}  // namespace

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

ImageRGB quantized(const ImageRGB& img) {
  ImageRGB out = img;
  for (auto& v : out.data) v = quantize(v) / 255.0;
  return out;
}

ImageRGB decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw DataError("unsupported image format (expected PNG or binary PPM)");
}

ImageRGB load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const ImageRGB& img) {
  auto px = to_interleaved(img);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr)) {
    throw DataError(std::string("png: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr)) {
    throw DataError(std::string("png: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> encode_ppm(const ImageRGB& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  auto px = to_interleaved(img);
  out.insert(out.end(), px.begin(), px.end());
  return out;
}

void save_image(const ImageRGB& img, const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") {
    atomic_write(path, encode_png(img));
  } else if (ext == ".ppm") {
    atomic_write(path, encode_ppm(img));
  } else {
    throw DataError("cannot save '" + path.string() + "': use a .png or .ppm extension");
  }
}

ImageRGB crop(const ImageRGB& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  if (y + h > img.height || x + w > img.width) {
    throw DataError("crop (" + std::to_string(y) + "," + std::to_string(x) + ") " +
                    std::to_string(h) + "x" + std::to_string(w) + " exceeds image " +
                    std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  ImageRGB out(h, w);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) out.at(c, r, q) = img.at(c, y + r, x + q);
    }
  }
  return out;
}

ImageRGB center_crop_multiple(const ImageRGB& img, std::size_t multiple) {
  const std::size_t h = img.height / multiple * multiple;
  const std::size_t w = img.width / multiple * multiple;
  if (h == 0 || w == 0) {
    throw DataError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                    " is smaller than scale " + std::to_string(multiple));
  }
  return crop(img, (img.height - h) / 2, (img.width - w) / 2, h, w);
}

ImageRGB flip_horizontal(const ImageRGB& img) {
  ImageRGB out(img.height, img.width);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, img.width - 1 - x) = img.at(c, y, x);
    }
  }
  return out;
}

ImageRGB rotate90(const ImageRGB& img, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  ImageRGB cur = img;
  for (int t = 0; t < k; ++t) {
    // Counter-clockwise: out(y, x) = in(x, W - 1 - y), out is W x H.
    ImageRGB next(cur.width, cur.height);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < next.height; ++y) {
        for (std::size_t x = 0; x < next.width; ++x) next.at(c, y, x) = cur.at(c, x, cur.width - 1 - y);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

template <typename T>
Tensor<T> to_tensor(std::span<const ImageRGB> images) {
  if (images.empty()) return Tensor<T>(Shape{0, 3, 0, 0});
  const std::size_t h = images[0].height;
  const std::size_t w = images[0].width;
  Tensor<T> t(Shape{images.size(), 3, h, w});
  auto d = t.mutable_data();
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n].height != h || images[n].width != w) {
      throw ShapeError("to_tensor: images in a batch must share extents");
    }
    std::transform(images[n].data.begin(), images[n].data.end(), d.begin() + n * 3 * h * w,
                   [](double v) { return static_cast<T>(v); });
  }
  return t;
}

template <typename T>
ImageRGB from_tensor(const Tensor<T>& t, std::size_t n) {
  const Shape& s = t.shape();
  if (s.c != 3 || n >= s.n) throw ShapeError("from_tensor: " + s.str() + " has no RGB item " + std::to_string(n));
  ImageRGB img(s.h, s.w);
  auto d = t.data();
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = std::clamp(static_cast<double>(d[n * s.item() + i]), 0.0, 1.0);
  }
  return img;
}

template Tensor<float> to_tensor(std::span<const ImageRGB>);
template Tensor<double> to_tensor(std::span<const ImageRGB>);
template ImageRGB from_tensor(const Tensor<float>&, std::size_t);
template ImageRGB from_tensor(const Tensor<double>&, std::size_t);

}  // namespace mrdn
