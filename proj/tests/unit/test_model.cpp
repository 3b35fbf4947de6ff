#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mrdn/checkpoint.hpp"
#include "mrdn/error.hpp"
#include "mrdn/model.hpp"
#include "oracles.hpp"

using namespace mrdn;

namespace {

ModelConfig tiny(int scale) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.scale = scale;
  return cfg;
}

template <typename T>
std::set<std::pair<std::string, std::vector<std::size_t>>> signature(const ParamList<T>& params) {
  std::set<std::pair<std::string, std::vector<std::size_t>>> out;
  for (const auto& p : params) out.insert({p.name, p.dims});
  return out;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

TEST(ModelConfig, ScalesAndValidation) {
  EXPECT_EQ(recurrence_depth(2), 1);
  EXPECT_EQ(recurrence_depth(4), 2);
  EXPECT_EQ(recurrence_depth(8), 3);
  EXPECT_THROW(recurrence_depth(3), UsageError);
  EXPECT_FALSE(is_supported_scale(16));
  ModelConfig bad = ModelConfig::tiny();
  bad.in_channels = 1;
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Generator, ShapeContracts) {
  const Generator<float> gen(tiny(4), 1);
  Rng rng(1);
  const auto x = Tensor<float>::uniform({1, 3, 8, 8}, 0, 1, rng);
  EXPECT_EQ(gen.forward_2x(x).shape(), (Shape{1, 3, 16, 16}));
  EXPECT_EQ(gen.forward_recurrent(x, 4).shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(gen.forward_recurrent(x, 8).shape(), (Shape{1, 3, 64, 64}));
  EXPECT_THROW(gen.forward_2x(Tensor<float>(Shape{1, 4, 8, 8})), ShapeError);
  EXPECT_THROW(gen.forward_recurrent(x, 3), UsageError);
}

TEST(Generator, Scale2RecurrenceEqualsPlainForward) {
  const Generator<float> gen(tiny(2), 2);
  Rng rng(2);
  const auto x = Tensor<float>::uniform({2, 3, 6, 5}, 0, 1, rng);
  const auto a = gen.forward_2x(x);
  const auto b = gen.forward_recurrent(x, 2);
  for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
}

TEST(Generator, Scale4IsTwoClampedStages) {
  const Generator<double> gen(tiny(4), 3);
  Rng rng(3);
  const auto x = Tensor<double>::uniform({1, 3, 5, 5}, 0, 1, rng);
  const auto expected = gen.forward_2x(clamp(gen.forward_2x(x), 0.0, 1.0));
  const auto got = gen.forward_recurrent(x, 4);
  for (std::size_t i = 0; i < got.numel(); ++i) ASSERT_EQ(got.data()[i], expected.data()[i]);
}

TEST(Generator, ParametersIndependentOfScale) {
  const auto s2 = signature(Generator<float>(tiny(2), 4).params());
  EXPECT_EQ(s2, signature(Generator<float>(tiny(4), 4).params()));
  EXPECT_EQ(s2, signature(Generator<float>(tiny(8), 4).params()));
}

TEST(Generator, ParamCountMatchesLayerEnumeration) {
  const ModelConfig cfg = tiny(2);
  const Generator<float> gen(cfg, 5);
  const std::size_t g0 = cfg.block.g0;
  auto conv_count = [](std::size_t ci, std::size_t co, std::size_t k) { return ci * co * k * k + co; };
  const std::size_t expected = conv_count(3, g0, 3) + conv_count(g0, g0, 3) +
                               cfg.blocks * block_param_count(cfg.block) +
                               conv_count(cfg.blocks * g0, g0, 1) + conv_count(g0, g0, 3) +
                               conv_count(g0, 4 * g0, 3) + conv_count(g0, 3, 3);
  EXPECT_EQ(count_params(gen.params()), expected);
}

TEST(Generator, SameSeedSameWeightsAndOutputs) {
  const Generator<float> a(tiny(2), 9), b(tiny(2), 9), c(tiny(2), 10);
  Rng rng(4);
  const auto x = Tensor<float>::uniform({1, 3, 4, 4}, 0, 1, rng);
  const auto ya = a.forward_2x(x), yb = b.forward_2x(x), yc = c.forward_2x(x);
  bool differs = false;
  for (std::size_t i = 0; i < ya.numel(); ++i) {
    ASSERT_EQ(ya.data()[i], yb.data()[i]);
    differs = differs || ya.data()[i] != yc.data()[i];
  }
  EXPECT_TRUE(differs);
}

TEST(Generator, DegenerateWeightsStayFinite) {
  Generator<float> gen(tiny(4), 6);
  auto params = gen.params();
  for (auto& p : params) {
    if (p.name.rfind("sfe1.", 0) == 0) continue;
    for (auto& v : p.tensor.mutable_data()) v = 0.0f;
  }
  Rng rng(5);
  const auto y = gen.forward_recurrent(Tensor<float>::uniform({1, 3, 4, 4}, 0, 1, rng), 4);
  EXPECT_TRUE(all_finite(y));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Generator, OutputsFiniteForImageInputs) {
  const Generator<float> gen(ModelConfig::tiny(), 7);
  Rng rng(6);
  for (int t = 0; t < 3; ++t) {
    EXPECT_TRUE(all_finite(gen.forward_recurrent(Tensor<float>::uniform({1, 3, 6, 6}, 0, 1, rng), 8)));
  }
}

TEST(GeneratorGrad, TinyEndToEnd) {
  const Generator<double> gen(tiny(4), 8);
  Rng rng(7);
  const auto x = Tensor<double>::uniform({1, 3, 4, 5}, 0, 1, rng);
  std::vector<Tensor<double>> wrt;
  for (const auto& p : gen.params()) wrt.push_back(p.tensor);
  const auto r = oracle::grad_check([&] { return oracle::project(gen.forward_recurrent(x, 4), 3); }, wrt, 1e-4,
                                    1e-4, 12, 21);
  EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(Discriminator, LogitPerItemAndDeterminism) {
  const Discriminator<float> disc(DiscriminatorConfig::tiny(), 1);
  Rng rng(8);
  const auto hr1 = Tensor<float>::uniform({1, 3, 16, 16}, 0, 1, rng);
  const auto lr1 = Tensor<float>::uniform({1, 3, 8, 8}, 0, 1, rng);
  // Same item twice along the batch.
  Tensor<float> hr2(Shape{2, 3, 16, 16});
  Tensor<float> lr2(Shape{2, 3, 8, 8});
  for (std::size_t n = 0; n < 2; ++n) {
    std::copy(hr1.data().begin(), hr1.data().end(), hr2.mutable_data().begin() + n * hr1.numel());
    std::copy(lr1.data().begin(), lr1.data().end(), lr2.mutable_data().begin() + n * lr1.numel());
  }
  const auto logits = disc.forward(hr2, lr2);
  ASSERT_EQ(logits.shape(), (Shape{2, 1, 1, 1}));
  EXPECT_EQ(logits.data()[0], logits.data()[1]);
}

TEST(Discriminator, ConditioningMatters) {
  const Discriminator<double> disc(DiscriminatorConfig::tiny(), 2);
  Rng rng(9);
  const auto hr = Tensor<double>::uniform({1, 3, 16, 16}, 0, 1, rng);
  const auto lr_a = Tensor<double>::uniform({1, 3, 8, 8}, 0, 1, rng);
  const auto lr_b = Tensor<double>::uniform({1, 3, 8, 8}, 0, 1, rng);
  EXPECT_NE(disc.forward(hr, lr_a).item(), disc.forward(hr, lr_b).item());
}

TEST(Discriminator, SpatialMismatchRejected) {
  const Discriminator<float> disc(DiscriminatorConfig::tiny(), 3);
  EXPECT_THROW(disc.forward_conditioned(Tensor<float>(Shape{1, 3, 16, 16}), Tensor<float>(Shape{1, 3, 8, 8})),
               ShapeError);
  EXPECT_THROW(disc.forward(Tensor<float>(Shape{1, 3, 18, 18}), Tensor<float>(Shape{1, 3, 9, 9})), ShapeError);
}

TEST(DiscriminatorGrad, TinyParamsAndCandidate) {
  const Discriminator<double> disc(DiscriminatorConfig::tiny(), 4);
  Rng rng(10);
  auto hr = Tensor<double>::uniform({1, 3, 8, 8}, 0, 1, rng);
  hr.set_requires_grad(true);
  const auto lr = Tensor<double>::uniform({1, 3, 4, 4}, 0, 1, rng);
  std::vector<Tensor<double>> wrt{hr};
  for (const auto& p : disc.params()) wrt.push_back(p.tensor);
  const auto r = oracle::grad_check([&] { return disc.forward(hr, lr); }, wrt, 1e-4, 1e-4, 16, 5);
  EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(FeatureExtractor, ShapeDeterminismAndFrozen) {
  const FeatureExtractor<float> fx(FeatureConfig::tiny());
  Rng rng(11);
  const auto img = Tensor<float>::uniform({1, 3, 32, 32}, 0, 1, rng);
  const auto a = fx.extract(img);
  EXPECT_EQ(a.shape(), (Shape{1, 16, 8, 8}));
  const auto b = fx.extract(img);
  for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
  for (const auto& p : fx.params()) EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
  EXPECT_EQ(FeatureExtractor<float>(FeatureConfig{}).extract(img).shape(), (Shape{1, 64, 8, 8}));
}

TEST(FeatureExtractor, SwappingWeightsChangesFeatures) {
  const FeatureExtractor<float> seeded(FeatureConfig::tiny());
  FeatureExtractor<float> swapped(FeatureConfig::tiny());
  swapped.load(to_checkpoint(FeatureExtractor<float>(FeatureConfig::tiny(), 7).params()));
  Rng rng(12);
  const auto img = Tensor<float>::uniform({1, 3, 16, 16}, 0, 1, rng);
  const auto a = seeded.extract(img);
  const auto b = swapped.extract(img);
  ASSERT_EQ(a.shape(), b.shape());
  EXPECT_NE(Checkpoint::values_checksum(a.data()), Checkpoint::values_checksum(b.data()));
}
