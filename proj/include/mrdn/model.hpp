#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mrdn/blocks.hpp"
#include "mrdn/checkpoint.hpp"
#include "mrdn/nn.hpp"
#include "mrdn/params.hpp"
#include "mrdn/tensor.hpp"

namespace mrdn {

struct ModelConfig {
  std::size_t blocks = 8;  // D
  BlockConfig block{};     // G0 = 64, G = 32, C = 6, MRDB
  int scale = 4;
  std::size_t in_channels = 3;

  static ModelConfig standard() { return ModelConfig{}; }
  // D = 2, G0 = 8, G = 4, C = 2.
  static ModelConfig tiny();

  void validate() const;
};

bool is_supported_scale(int scale);
// log2(scale) for scale in {2, 4, 8}; throws UsageError otherwise.
int recurrence_depth(int scale);

/// Scale-recurrent generator: one 2x super-resolution stage whose parameters
/// are reused log2(scale) times.
template <typename T>
class Generator {
 public:
  Generator(const ModelConfig& cfg, std::uint64_t seed);

  // (N, 3, H, W) -> (N, 3, 2H, 2W).
  Tensor<T> forward_2x(const Tensor<T>& x) const;
  // Applies forward_2x log2(scale) times; intermediate outputs are clamped to
  // [0, 1] before re-entry, the final output is not.
  Tensor<T> forward_recurrent(const Tensor<T>& x, int scale) const;

  ParamList<T> params() const;
  const ModelConfig& config() const { return cfg_; }

  // Exposed for tests that need to zero or inspect individual layers.
  ConvParams<T> sfe1, sfe2, gff1, gff2, up, out;
  std::vector<DenseBlock<T>> blocks;

 private:
  ModelConfig cfg_;
};

struct DiscriminatorConfig {
  std::size_t width = 16;
  float slope = 0.2f;

  static DiscriminatorConfig tiny() { return {8, 0.2f}; }
};

/// Conditional discriminator over concat(candidate HR, bicubic-upsampled LR).
///
/// Three 3x3 conv + leaky ReLU stages, the first two followed by a 2x
/// space-to-depth rearrangement, then a spatial mean and a 1x1 conv to one
/// logit per item. Candidate height and width must be divisible by 4.
template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  // Returns logits of shape (N, 1, 1, 1).
  Tensor<T> forward(const Tensor<T>& hr_candidate, const Tensor<T>& lr) const;
  Tensor<T> forward_conditioned(const Tensor<T>& hr_candidate, const Tensor<T>& lr_upsampled) const;

  ParamList<T> params() const;

 private:
  DiscriminatorConfig cfg_;
  std::vector<ConvParams<T>> layers_;
};

// Bicubic upsampling of the LR condition to the candidate's extent.
template <typename T>
Tensor<T> upsample_condition(const Tensor<T>& lr, const Shape& hr_shape);

struct FeatureConfig {
  std::size_t width1 = 16;
  std::size_t width2 = 32;
  std::size_t features = 64;

  static FeatureConfig tiny() { return {8, 16, 16}; }
};

inline constexpr std::uint64_t kFeatureSeed = 54;

/// Frozen five-layer conv stack standing in for a pretrained VGG. Features
/// are taken before the last activation at 1/4 of the input resolution.
template <typename T>
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FeatureConfig& cfg, std::uint64_t seed = kFeatureSeed);

  Tensor<T> extract(const Tensor<T>& img) const;
  std::size_t feature_channels() const { return cfg_.features; }

  ParamList<T> params() const;
  void load(const Checkpoint& ckpt);

 private:
  FeatureConfig cfg_;
  std::vector<ConvParams<T>> layers_;
};

}  // namespace mrdn
