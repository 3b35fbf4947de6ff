#include <gtest/gtest.h>

#include <cmath>

#include "mrdn/error.hpp"
#include "mrdn/train.hpp"
#include "oracles.hpp"

using namespace mrdn;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor<double>::uniform(s, 0.0, 1.0, rng);
}

PairedDataset small_dataset(std::size_t scale, std::uint64_t seed = 1) {
  std::vector<ImageRGB> imgs;
  for (std::uint64_t k = 0; k < 3; ++k) imgs.push_back(oracle::synthetic_image(seed + k, 32, 32));
  return PairedDataset::from_images(imgs, scale);
}

TrainPlan small_plan(Phase phase, std::size_t iters) {
  TrainPlan plan;
  plan.phase = phase;
  plan.iterations = iters;
  plan.batch = 2;
  plan.patch = 8;
  plan.scale = 4;
  plan.base_lr = 1e-3;
  return plan;
}

std::vector<std::uint32_t> checksums(const Checkpoint& c) {
  std::vector<std::uint32_t> out;
  for (const auto& e : c.entries()) out.push_back(Checkpoint::values_checksum(e.values));
  return out;
}

}  // namespace

TEST(Losses, L1ValueAndGradient) {
  Tensor<double> pred(Shape{1, 1, 1, 4}, {0.0, 1.0, 2.0, 3.0});
  Tensor<double> target(Shape{1, 1, 1, 4}, {1.0, 1.0, 0.0, 4.0});
  pred.set_requires_grad(true);
  const auto loss = l1_loss(pred, target);
  EXPECT_DOUBLE_EQ(loss.item(), (1.0 + 0.0 + 2.0 + 1.0) / 4.0);
  backward(loss);
  EXPECT_DOUBLE_EQ(pred.grad()[0], -0.25);
  EXPECT_DOUBLE_EQ(pred.grad()[2], 0.25);
  EXPECT_THROW(l1_loss(pred, Tensor<double>(Shape{1, 1, 1, 3})), ShapeError);
}

TEST(Losses, FeatureLossZeroOnIdenticalAndGradOnlyToPred) {
  const FeatureExtractor<double> fx(FeatureConfig::tiny());
  auto pred = random_tensor({1, 3, 8, 8}, 2).set_requires_grad(true);
  auto target = random_tensor({1, 3, 8, 8}, 3).set_requires_grad(true);
  EXPECT_EQ(feature_loss(pred, pred.clone(), fx).item(), 0.0);
  Tape<double>::active().clear();
  const auto loss = feature_loss(pred, target, fx);
  EXPECT_GT(loss.item(), 0.0);
  backward(loss);
  EXPECT_TRUE(pred.has_grad());
  EXPECT_FALSE(target.has_grad());
  const auto r = oracle::grad_check([&] { return feature_loss(pred, target, fx); }, {pred}, 1e-4, 1e-4, 24, 1);
  EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(Losses, GanLossesAtZeroLogits) {
  const Tensor<double> zero(Shape{4, 1, 1, 1}, std::vector<double>(4, 0.0));
  const auto g = gan_losses(zero, zero);
  EXPECT_NEAR(g.g_loss.item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(g.d_loss.item(), 2.0 * std::log(2.0), 1e-15);
  Tensor<double> real(Shape{2, 1, 1, 1}, {30.0, 40.0});
  Tensor<double> fake(Shape{2, 1, 1, 1}, {-30.0, -40.0});
  EXPECT_LT(gan_losses(real, fake).d_loss.item(), 1e-12);
  Tape<double>::active().clear();
}

TEST(Losses, CombinedReducesToSingleTermsBitwise) {
  const FeatureExtractor<double> fx(FeatureConfig::tiny());
  const auto pred = random_tensor({2, 3, 8, 8}, 4);
  const auto target = random_tensor({2, 3, 8, 8}, 5);
  const auto lr = random_tensor({2, 3, 4, 4}, 6);
  const LossModels<double> models{&fx, nullptr};
  EXPECT_EQ(combined_loss(pred, target, lr, {1, 0, 0}, models).total.item(), l1_loss(pred, target).item());
  EXPECT_EQ(combined_loss(pred, target, lr, {0, 1, 0}, models).total.item(), feature_loss(pred, target, fx).item());
  const auto mix = combined_loss(pred, target, lr, {0.5, 2.0, 0}, models);
  EXPECT_NEAR(mix.total.item(), 0.5 * mix.l1 + 2.0 * mix.feat, 1e-15);
  EXPECT_EQ(mix.adv, 0.0);
  EXPECT_THROW(combined_loss(pred, target, lr, {1, 1, 0}, LossModels<double>{}), UsageError);
  EXPECT_THROW(combined_loss(pred, target, lr, {1, 0, 1}, models), UsageError);
}

TEST(Losses, CombinedWithAdversarialTerm) {
  const Discriminator<double> disc(DiscriminatorConfig::tiny(), 3);
  const auto pred = random_tensor({2, 3, 8, 8}, 7);
  const auto target = random_tensor({2, 3, 8, 8}, 8);
  const auto lr = random_tensor({2, 3, 4, 4}, 9);
  const auto terms = combined_loss(pred, target, lr, {0, 0, 1}, LossModels<double>{nullptr, &disc});
  const auto fake = disc.forward(pred, lr);
  EXPECT_EQ(terms.total.item(), gan_losses(fake, fake).g_loss.item());
  Tape<double>::active().clear();
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW(LossWeights::content().validate());
  EXPECT_THROW((LossWeights{0, 0, 0}).validate(), UsageError);
  EXPECT_THROW((LossWeights{-1, 0, 0}).validate(), UsageError);
  EXPECT_THROW((LossWeights{NAN, 0, 0}).validate(), UsageError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor<double> p(Shape{1, 1, 1, 3}, {1.0, -2.0, 0.5});
  p.set_requires_grad(true);
  Adam<double> opt({{"p", p, {3}}});
  backward(sum(mul(p, Tensor<double>(Shape{1, 1, 1, 3}, {3.0, -0.01, 100.0}))));
  opt.step(1e-4);
  EXPECT_NEAR(p.data()[0], 1.0 - 1e-4, 1e-10);
  EXPECT_NEAR(p.data()[1], -2.0 + 1e-4, 1e-9);
  EXPECT_NEAR(p.data()[2], 0.5 - 1e-4, 1e-10);
  EXPECT_FALSE(p.has_grad() && p.grad()[0] != 0.0);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MatchesScalarReferenceTrace) {
  // Minimizes (p - 3)^2 and replays the same updates in plain doubles.
  Tensor<double> p(Shape{1, 1, 1, 1}, {0.0});
  p.set_requires_grad(true);
  Adam<double> opt({{"p", p, {1}}});
  double ref = 0.0, m = 0.0, v = 0.0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 50; ++t) {
    const double lr = lr_at(static_cast<std::uint64_t>(t - 1), 0.1, 20);
    backward(square(sub(p, Tensor<double>(Shape{1, 1, 1, 1}, {3.0}))));
    opt.step(lr);
    const double g = 2.0 * (ref - 3.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    ref -= lr * mhat / (std::sqrt(vhat) + eps);
    ASSERT_NEAR(p.data()[0], ref, 1e-12) << "step " << t;
  }
}

TEST(Adam, ZeroGradientLeavesParamsAndMissingGradThrows) {
  Tensor<double> p(Shape{1, 1, 1, 2}, {0.25, -0.5});
  p.set_requires_grad(true);
  Adam<double> opt({{"p", p, {2}}});
  EXPECT_THROW(opt.step(1e-3), UsageError);
  backward(sum(mul(p, Tensor<double>(Shape{1, 1, 1, 2}, {0.0, 0.0}))));
  opt.step(1e-3);
  EXPECT_EQ(p.data()[0], 0.25);
  EXPECT_EQ(p.data()[1], -0.5);
}

TEST(Schedule, HalvesEveryPeriod) {
  EXPECT_EQ(lr_at(0, 1e-4, 200000), 1e-4);
  EXPECT_EQ(lr_at(199999, 1e-4, 200000), 1e-4);
  EXPECT_EQ(lr_at(200000, 1e-4, 200000), 5e-5);
  EXPECT_EQ(lr_at(650000, 1e-4, 200000), 1.25e-5);
  EXPECT_THROW(lr_at(1, 1e-4, 0), UsageError);
}

TEST(Phase, NamesRoundTrip) {
  for (Phase p : {Phase::kPretrain2x, Phase::kFinetuneRecurrent, Phase::kGanFinetune}) {
    EXPECT_EQ(parse_phase(to_string(p)), p);
  }
  EXPECT_THROW(parse_phase("pretrain"), UsageError);
  TrainPlan plan;
  EXPECT_EQ(plan.effective_scale(), 2);
  plan.phase = Phase::kFinetuneRecurrent;
  EXPECT_EQ(plan.effective_scale(), 4);
}

TEST(Trace, TabSeparatedRows) {
  const std::string text = format_trace({{0, 1e-4, 0.5, 0.25, 0.125, 0.0, 0.7}});
  EXPECT_EQ(text, "0\t0.0001\t0.5\t0.25\t0.125\t0\n");
}

TEST(TrainPhase, ZeroLearningRateKeepsWeights) {
  Generator<float> gen(ModelConfig::tiny(), 1);
  const auto before = checksums(to_checkpoint(gen.params()));
  TrainPlan plan = small_plan(Phase::kPretrain2x, 3);
  plan.base_lr = 0.0;
  const auto result = train_phase({&gen}, small_dataset(2), plan, {1, 0, 0}, 5);
  EXPECT_EQ(checksums(result.checkpoint), before);
  EXPECT_EQ(result.trace.size(), 3u);
}

TEST(TrainPhase, DeterministicForSeed) {
  auto run = [] {
    Generator<float> gen(ModelConfig::tiny(), 2);
    return train_phase({&gen}, small_dataset(2), small_plan(Phase::kPretrain2x, 5), {1, 0, 0}, 9);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(checksums(a.checkpoint), checksums(b.checkpoint));
  EXPECT_EQ(format_trace(a.trace), format_trace(b.trace));
}

TEST(TrainPhase, L1DecreasesOverShortRun) {
  Generator<float> gen(ModelConfig::tiny(), 3);
  TrainPlan plan = small_plan(Phase::kPretrain2x, 500);
  plan.batch = 4;
  const auto result = train_phase({&gen}, small_dataset(2, 20), plan, {1, 0, 0}, 4);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    head += result.trace[i].l1;
    tail += result.trace[result.trace.size() - 1 - i].l1;
  }
  EXPECT_LT(tail, 0.7 * head) << head / 50 << " -> " << tail / 50;
}

TEST(TrainPhase, FinetuneLoadsPretrainedAndGanAddsDisc) {
  Generator<float> gen(ModelConfig::tiny(), 4);
  const auto pre = train_phase({&gen}, small_dataset(2), small_plan(Phase::kPretrain2x, 2), {1, 0, 0}, 1);
  Generator<float> fresh(ModelConfig::tiny(), 99);
  TrainSetup setup{&fresh};
  setup.initial = &pre.checkpoint;
  TrainPlan plan = small_plan(Phase::kFinetuneRecurrent, 0);
  const auto loaded = train_phase(setup, small_dataset(4), plan, {1, 0, 0}, 1);
  EXPECT_EQ(checksums(loaded.checkpoint), checksums(pre.checkpoint));

  Discriminator<float> disc(DiscriminatorConfig::tiny(), 5);
  const FeatureExtractor<float> fx(FeatureConfig::tiny());
  setup.discriminator = &disc;
  setup.features = &fx;
  const auto gan = train_phase(setup, small_dataset(4), small_plan(Phase::kGanFinetune, 2),
                               LossWeights::adversarial(), 1);
  EXPECT_NE(gan.checkpoint.find("disc.layer1.weight"), nullptr);
  for (const auto& row : gan.trace) {
    EXPECT_GT(row.d_loss, 0.0);
    EXPECT_GT(row.adv, 0.0);
  }
}

TEST(TrainPhase, Errors) {
  Generator<float> gen(ModelConfig::tiny(), 6);
  EXPECT_THROW(train_phase({&gen}, small_dataset(4), small_plan(Phase::kFinetuneRecurrent, 1), {1, 0, 0}, 1),
               UsageError);
  EXPECT_THROW(train_phase({&gen}, small_dataset(4), small_plan(Phase::kPretrain2x, 1), {1, 0, 0}, 1),
               UsageError);
  EXPECT_THROW(train_phase({&gen}, small_dataset(2), small_plan(Phase::kPretrain2x, 1), {1, 0, 0.1}, 1),
               UsageError);
  EXPECT_THROW(train_phase({&gen}, small_dataset(2), small_plan(Phase::kPretrain2x, 1), {1, 1, 0}, 1),
               UsageError);
  EXPECT_THROW(train_phase({nullptr}, small_dataset(2), small_plan(Phase::kPretrain2x, 1), {1, 0, 0}, 1),
               UsageError);
}
