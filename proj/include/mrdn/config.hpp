#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mrdn/model.hpp"
#include "mrdn/train.hpp"

namespace mrdn {

/// Training run description read from flat `key = value` text.
///
///   [model]  preset (tiny|standard), blocks, g0, growth, layers,
///            block (rdb|mrdb), disc_width, features (tiny|standard)
///   [train]  phase, iterations, lr, lr_period, batch, patch, scale, seed,
///            w_l1, w_feat, w_adv
///   [data]   manifest, out, log
///
/// `#` starts a comment. The preset is applied before the other model keys
/// regardless of order. Unset loss weights take the phase defaults. Relative
/// paths resolve against the config file's directory.
struct RunConfig {
  ModelConfig model = ModelConfig::standard();
  DiscriminatorConfig disc{};
  FeatureConfig features{};
  TrainPlan plan{};
  LossWeights weights = LossWeights::content();
  std::uint64_t seed = 1;
  std::filesystem::path manifest;
  std::filesystem::path out = "model.ckpt";
  std::filesystem::path log;  // empty: out + ".log"

  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  // Switches model, discriminator and feature extractor to the test preset.
  void apply_tiny();
  std::filesystem::path log_path() const;
};

}  // namespace mrdn
