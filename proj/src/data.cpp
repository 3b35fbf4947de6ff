#include "mrdn/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mrdn/bicubic.hpp"
#include "mrdn/error.hpp"

namespace mrdn {

ImageRGB bicubic_resize(const ImageRGB& img, std::size_t out_height, std::size_t out_width) {
  if (out_height == 0 || out_width == 0) {
    throw UsageError("bicubic_resize: target extent must be positive");
  }
  ImageRGB out(out_height, out_width);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto r = resize_plane(img.channel(c), img.height, img.width, out_height, out_width);
    std::transform(r.begin(), r.end(), out.data.begin() + c * out.plane(),
                   [](double v) { return std::clamp(v, 0.0, 1.0); });
  }
  return out;
}

ImageRGB degrade_bi(const ImageRGB& hr, std::size_t scale) {
  if (scale == 0 || hr.height % scale != 0 || hr.width % scale != 0) {
    throw DataError("degrade_bi: " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                    " is not divisible by scale " + std::to_string(scale));
  }
  return bicubic_resize(hr, hr.height / scale, hr.width / scale);
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest DatasetManifest::parse(const std::string& text, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream words(line.substr(1));
      std::string word;
      while (words >> word) {
        if (word.rfind("scale=", 0) == 0) m.scale = std::stoul(word.substr(6));
        if (word.rfind("degradation=", 0) == 0) m.degradation = word.substr(12);
      }
      continue;
    }
    const auto tab = line.find('\t');
    Pair pair;
    pair.hr = resolve(line.substr(0, tab));
    if (tab != std::string::npos) {
      const std::string lr = line.substr(tab + 1);
      if (lr.empty() || lr.find('\t') != std::string::npos) {
        throw DataError("manifest line " + std::to_string(lineno) + ": expected hr<TAB>lr");
      }
      pair.lr = resolve(lr);
    }
    m.pairs.push_back(std::move(pair));
  }
  if (m.degradation != "BI") {
    throw DataError("manifest: unsupported degradation '" + m.degradation + "'");
  }
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::string DatasetManifest::to_text() const {
  std::ostringstream os;
  os << "# degradation=" << degradation;
  if (scale) os << " scale=" << *scale;
  os << '\n';
  for (const auto& p : pairs) {
    os << p.hr.string();
    if (p.lr) os << '\t' << p.lr->string();
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Dataset

PairedDataset PairedDataset::from_manifest(const DatasetManifest& manifest, std::size_t scale) {
  if (manifest.pairs.empty()) throw DataError("dataset manifest lists no images");
  if (manifest.scale && *manifest.scale != scale) {
    throw DataError("manifest was generated for scale " + std::to_string(*manifest.scale) +
                    ", requested " + std::to_string(scale));
  }
  PairedDataset ds;
  ds.scale_ = scale;
  for (const auto& p : manifest.pairs) {
    TrainingPair pair;
    pair.id = p.hr.stem().string();
    pair.hr = center_crop_multiple(load_image(p.hr), scale);
    if (p.lr) {
      pair.lr = load_image(*p.lr);
      if (pair.lr.height * scale != pair.hr.height || pair.lr.width * scale != pair.hr.width) {
        throw DataError("LR image '" + p.lr->string() + "' does not match HR '" + p.hr.string() +
                        "' at scale " + std::to_string(scale));
      }
    } else {
      pair.lr = degrade_bi(pair.hr, scale);
    }
    ds.pairs_.push_back(std::move(pair));
  }
  return ds;
}

PairedDataset PairedDataset::from_images(const std::vector<ImageRGB>& hr, std::size_t scale) {
  if (hr.empty()) throw DataError("dataset is empty");
  PairedDataset ds;
  ds.scale_ = scale;
  for (std::size_t i = 0; i < hr.size(); ++i) {
    TrainingPair pair;
    pair.id = "image" + std::to_string(i);
    pair.hr = center_crop_multiple(hr[i], scale);
    pair.lr = degrade_bi(pair.hr, scale);
    ds.pairs_.push_back(std::move(pair));
  }
  return ds;
}

ImageRGB augment(const ImageRGB& img, int rotation, bool hflip) {
  ImageRGB out = rotate90(img, rotation);
  return hflip ? flip_horizontal(out) : out;
}

template <typename T>
PatchBatch<T> sample_batch(const PairedDataset& data, std::size_t patch, std::size_t n, Rng& rng) {
  if (data.empty()) throw DataError("sample_batch: dataset is empty");
  if (patch == 0) throw UsageError("sample_batch: patch size must be positive");
  const std::size_t s = data.scale();
  for (const auto& p : data.pairs()) {
    if (p.lr.height < patch || p.lr.width < patch) {
      throw DataError("sample_batch: image '" + p.id + "' (LR " + std::to_string(p.lr.height) +
                      "x" + std::to_string(p.lr.width) + ") is smaller than patch " +
                      std::to_string(patch));
    }
  }
  std::vector<ImageRGB> lr_patches;
  std::vector<ImageRGB> hr_patches;
  PatchBatch<T> batch;
  for (std::size_t i = 0; i < n; ++i) {
    PatchRecord rec;
    rec.image = std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng);
    const TrainingPair& pair = data.pairs()[rec.image];
    rec.lr_y = std::uniform_int_distribution<std::size_t>(0, pair.lr.height - patch)(rng);
    rec.lr_x = std::uniform_int_distribution<std::size_t>(0, pair.lr.width - patch)(rng);
    rec.rotation = std::uniform_int_distribution<int>(0, 3)(rng);
    rec.hflip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    lr_patches.push_back(augment(crop(pair.lr, rec.lr_y, rec.lr_x, patch, patch), rec.rotation, rec.hflip));
    hr_patches.push_back(augment(crop(pair.hr, s * rec.lr_y, s * rec.lr_x, s * patch, s * patch),
                                 rec.rotation, rec.hflip));
    batch.records.push_back(rec);
  }
  if (n == 0) {
    batch.lr = Tensor<T>(Shape{0, 3, patch, patch});
    batch.hr = Tensor<T>(Shape{0, 3, s * patch, s * patch});
  } else {
    batch.lr = to_tensor<T>(lr_patches);
    batch.hr = to_tensor<T>(hr_patches);
  }
  return batch;
}

template PatchBatch<float> sample_batch(const PairedDataset&, std::size_t, std::size_t, Rng&);
template PatchBatch<double> sample_batch(const PairedDataset&, std::size_t, std::size_t, Rng&);

}  // namespace mrdn
