#include "mrdn/model.hpp"

#include "mrdn/bicubic.hpp"
#include "mrdn/error.hpp"

namespace mrdn {

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.blocks = 2;
  cfg.block = BlockConfig{8, 4, 2, BlockKind::kMrdb};
  return cfg;
}

bool is_supported_scale(int scale) { return scale == 2 || scale == 4 || scale == 8; }

int recurrence_depth(int scale) {
  switch (scale) {
    case 2: return 1;
    case 4: return 2;
    case 8: return 3;
    default: throw UsageError("unsupported scale " + std::to_string(scale) + ", expected 2, 4 or 8");
  }
}

void ModelConfig::validate() const {
  block.validate();
  if (blocks < 1) throw UsageError("model needs at least one block");
  if (in_channels != 3) throw UsageError("model input must have 3 channels");
  recurrence_depth(scale);
}

// ---------------------------------------------------------------------------
// Generator

template <typename T>
Generator<T>::Generator(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t g0 = cfg_.block.g0;
  sfe1 = ConvParams<T>::init(cfg_.in_channels, g0, 3, rng);
  sfe2 = ConvParams<T>::init(g0, g0, 3, rng);
  for (std::size_t d = 0; d < cfg_.blocks; ++d) blocks.emplace_back(cfg_.block, rng);
  gff1 = ConvParams<T>::init(cfg_.blocks * g0, g0, 1, rng);
  gff2 = ConvParams<T>::init(g0, g0, 3, rng);
  up = ConvParams<T>::init(g0, 4 * g0, 3, rng);
  out = ConvParams<T>::init(g0, cfg_.in_channels, 3, rng);
}

template <typename T>
Tensor<T> Generator<T>::forward_2x(const Tensor<T>& x) const {
  if (x.shape().c != cfg_.in_channels) {
    throw ShapeError("generator: input has " + std::to_string(x.shape().c) +
                     " channels, expected " + std::to_string(cfg_.in_channels));
  }
  const Tensor<T> f0 = conv(x, sfe1);
  Tensor<T> cur = conv(f0, sfe2);
  std::vector<Tensor<T>> block_outputs;
  block_outputs.reserve(blocks.size());
  for (const auto& block : blocks) {
    cur = block.forward(cur);
    block_outputs.push_back(cur);
  }
  const Tensor<T> fused =
      conv(conv(concat_channels<T>(std::span<const Tensor<T>>(block_outputs)), gff1), gff2);
  const Tensor<T> global = add(fused, f0);
  return conv(pixel_shuffle(conv(global, up), 2), out);
}

template <typename T>
Tensor<T> Generator<T>::forward_recurrent(const Tensor<T>& x, int scale) const {
  const int depth = recurrence_depth(scale);
  Tensor<T> y = forward_2x(x);
  for (int stage = 1; stage < depth; ++stage) y = forward_2x(clamp(y, T{0}, T{1}));
  return y;
}

template <typename T>
ParamList<T> Generator<T>::params() const {
  ParamList<T> list;
  append_conv(list, "sfe1", sfe1);
  append_conv(list, "sfe2", sfe2);
  for (std::size_t d = 0; d < blocks.size(); ++d) {
    blocks[d].append_params("block" + std::to_string(d + 1), list);
  }
  append_conv(list, "gff1", gff1);
  append_conv(list, "gff2", gff2);
  append_conv(list, "up", up);
  append_conv(list, "out", out);
  return list;
}

// ---------------------------------------------------------------------------
// Discriminator

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.width < 1) throw UsageError("discriminator width must be positive");
  Rng rng(seed);
  const std::size_t w = cfg_.width;
  layers_.push_back(ConvParams<T>::init(6, w, 3, rng));
  layers_.push_back(ConvParams<T>::init(4 * w, 2 * w, 3, rng));
  layers_.push_back(ConvParams<T>::init(8 * w, 2 * w, 3, rng));
  layers_.push_back(ConvParams<T>::init(2 * w, 1, 1, rng));
}

template <typename T>
Tensor<T> upsample_condition(const Tensor<T>& lr, const Shape& hr_shape) {
  const Shape& ls = lr.shape();
  if (ls.n != hr_shape.n || ls.c != 3 || hr_shape.c != 3 || ls.h == 0 || ls.w == 0 ||
      hr_shape.h % ls.h != 0 || hr_shape.w % ls.w != 0 ||
      hr_shape.h / ls.h != hr_shape.w / ls.w) {
    throw ShapeError("discriminator: candidate " + hr_shape.str() +
                     " does not match an integer upscale of LR " + ls.str());
  }
  return bicubic_resize_tensor(lr, hr_shape.h, hr_shape.w);
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& hr_candidate, const Tensor<T>& lr) const {
  return forward_conditioned(hr_candidate, upsample_condition(lr, hr_candidate.shape()));
}

template <typename T>
Tensor<T> Discriminator<T>::forward_conditioned(const Tensor<T>& hr_candidate,
                                                const Tensor<T>& lr_upsampled) const {
  const Shape& s = hr_candidate.shape();
  if (s != lr_upsampled.shape()) {
    throw ShapeError("discriminator: candidate " + s.str() + " vs condition " +
                     lr_upsampled.shape().str());
  }
  if (s.c != 3 || s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError("discriminator: candidate " + s.str() +
                     " must be RGB with extents divisible by 4");
  }
  const T slope = static_cast<T>(cfg_.slope);
  Tensor<T> h = concat_channels<T>({hr_candidate, lr_upsampled});
  h = pixel_unshuffle(leaky_relu(conv(h, layers_[0]), slope), 2);
  h = pixel_unshuffle(leaky_relu(conv(h, layers_[1]), slope), 2);
  h = mean_spatial(leaky_relu(conv(h, layers_[2]), slope));
  return conv(h, layers_[3]);
}

template <typename T>
ParamList<T> Discriminator<T>::params() const {
  ParamList<T> list;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    append_conv(list, "disc.layer" + std::to_string(k + 1), layers_[k]);
  }
  return list;
}

// ---------------------------------------------------------------------------
// FeatureExtractor

template <typename T>
FeatureExtractor<T>::FeatureExtractor(const FeatureConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.width1 < 1 || cfg_.width2 < 1 || cfg_.features < 1) {
    throw UsageError("feature extractor widths must be positive");
  }
  Rng rng(seed);
  layers_.push_back(ConvParams<T>::init(3, cfg_.width1, 3, rng));
  layers_.push_back(ConvParams<T>::init(cfg_.width1, cfg_.width1, 3, rng));
  layers_.push_back(ConvParams<T>::init(4 * cfg_.width1, cfg_.width2, 3, rng));
  layers_.push_back(ConvParams<T>::init(4 * cfg_.width2, cfg_.features, 3, rng));
  layers_.push_back(ConvParams<T>::init(cfg_.features, cfg_.features, 3, rng));
  for (auto& l : layers_) l.set_requires_grad(false);
}

template <typename T>
Tensor<T> FeatureExtractor<T>::extract(const Tensor<T>& img) const {
  const Shape& s = img.shape();
  if (s.c != 3 || s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError("feature extractor: input " + s.str() +
                     " must be RGB with extents divisible by 4");
  }
  Tensor<T> h = relu(conv(img, layers_[0]));
  h = pixel_unshuffle(relu(conv(h, layers_[1])), 2);
  h = pixel_unshuffle(relu(conv(h, layers_[2])), 2);
  h = relu(conv(h, layers_[3]));
  return conv(h, layers_[4]);
}

template <typename T>
ParamList<T> FeatureExtractor<T>::params() const {
  ParamList<T> list;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    append_conv(list, "feat.layer" + std::to_string(k + 1), layers_[k]);
  }
  return list;
}

template <typename T>
void FeatureExtractor<T>::load(const Checkpoint& ckpt) {
  load_params(params(), ckpt);
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class FeatureExtractor<float>;
template class FeatureExtractor<double>;
template Tensor<float> upsample_condition(const Tensor<float>&, const Shape&);
template Tensor<double> upsample_condition(const Tensor<double>&, const Shape&);

}  // namespace mrdn
