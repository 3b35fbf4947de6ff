#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrdn/image.hpp"
#include "mrdn/tensor.hpp"

namespace mrdn {

// Separable bicubic resize of all three channels, clamped to [0, 1].
ImageRGB bicubic_resize(const ImageRGB& img, std::size_t out_height, std::size_t out_width);

// Bicubic (BI) degradation to (H / scale, W / scale). Throws DataError when an
// extent is not divisible by scale; crop first with center_crop_multiple.
ImageRGB degrade_bi(const ImageRGB& hr, std::size_t scale);

/// Paired HR/LR image list.
///
/// Text form: one pair per line, `hr_path[<TAB>lr_path]`, blank lines and
/// lines starting with `#` ignored. A `# scale=N` comment records the scale
/// the LR files were generated for. Relative paths resolve against the
/// manifest's directory.
struct DatasetManifest {
  struct Pair {
    std::filesystem::path hr;
    std::optional<std::filesystem::path> lr;
  };

  std::vector<Pair> pairs;
  std::optional<std::size_t> scale;
  std::string degradation = "BI";

  static DatasetManifest parse(const std::string& text, const std::filesystem::path& base_dir);
  static DatasetManifest load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct TrainingPair {
  std::string id;
  ImageRGB hr;
  ImageRGB lr;
};

/// HR images center-cropped to a multiple of the scale, each with its LR
/// counterpart (loaded, or generated by degrade_bi).
class PairedDataset {
 public:
  static PairedDataset from_manifest(const DatasetManifest& manifest, std::size_t scale);
  static PairedDataset from_images(const std::vector<ImageRGB>& hr, std::size_t scale);

  std::size_t scale() const { return scale_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const std::vector<TrainingPair>& pairs() const { return pairs_; }

 private:
  std::size_t scale_ = 2;
  std::vector<TrainingPair> pairs_;
};

struct PatchRecord {
  std::size_t image = 0;
  std::size_t lr_y = 0;  // LR crop origin; the HR origin is scale times this
  std::size_t lr_x = 0;
  int rotation = 0;      // quarter turns, counter-clockwise
  bool hflip = false;    // applied after the rotation
};

// Rotation followed by optional horizontal flip.
ImageRGB augment(const ImageRGB& img, int rotation, bool hflip);

template <typename T>
struct PatchBatch {
  Tensor<T> lr;  // (n, 3, patch, patch)
  Tensor<T> hr;  // (n, 3, scale * patch, scale * patch)
  std::vector<PatchRecord> records;
};

/// Draws n aligned LR/HR patch pairs uniformly over images and positions,
/// each with a random quarter-turn rotation and horizontal flip applied to
/// both members. Throws DataError when an image is too small for the crop.
template <typename T>
PatchBatch<T> sample_batch(const PairedDataset& data, std::size_t patch, std::size_t n, Rng& rng);

}  // namespace mrdn
