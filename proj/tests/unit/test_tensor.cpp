#include <gtest/gtest.h>

#include <cmath>

#include "mrdn/error.hpp"
#include "mrdn/tensor.hpp"
#include "oracles.hpp"

using namespace mrdn;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return Tensor<double>::uniform(s, lo, hi, rng).set_requires_grad(true);
}

}  // namespace

TEST(Tensor, AddValuesAndBatchBroadcast) {
  Tensor<float> a(Shape{2, 1, 1, 2}, {1, 2, 3, 4});
  Tensor<float> b(Shape{1, 1, 1, 2}, {10, 20});
  const auto c = add(a, b);
  EXPECT_EQ(std::vector<float>(c.data().begin(), c.data().end()), (std::vector<float>{11, 22, 13, 24}));
  EXPECT_THROW(add(a, Tensor<float>(Shape{1, 1, 1, 3})), ShapeError);
}

TEST(Tensor, ReluValuesAndGradientAtKnownPoints) {
  Tensor<double> x(Shape{1, 1, 1, 3}, {-1.0, 0.0, 2.0});
  x.set_requires_grad(true);
  const auto y = relu(x);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{0, 0, 2}));
  backward(sum(y));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Tensor, NonParticipatingTensorNeverAllocatesGrad) {
  auto a = random_tensor({1, 2, 3, 3}, 1);
  Tensor<double> b = Tensor<double>::ones({1, 2, 3, 3});
  backward(sum(mul(a, b)));
  EXPECT_TRUE(a.has_grad());
  EXPECT_FALSE(b.has_grad());
}

TEST(Tensor, BackwardClearsTapeAndAccumulates) {
  auto a = random_tensor({1, 1, 2, 2}, 2);
  backward(sum(a));
  EXPECT_TRUE(Tape<double>::active().empty());
  backward(sum(a));
  for (double g : a.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Tensor, TapeEntriesAreTopologicallyOrdered) {
  auto a = random_tensor({1, 1, 2, 2}, 3);
  const auto b = relu(a);
  const auto c = mul(b, a);
  const auto d = sum(c);
  const auto& entries = Tape<double>::active().entries();
  ASSERT_EQ(entries.size(), 3u);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (const auto& in : entries[i].inputs) {
      for (std::size_t j = i; j < entries.size(); ++j) EXPECT_NE(in, entries[j].output);
    }
  }
  Tape<double>::active().clear();
  (void)d;
}

TEST(Tensor, NoGradGuardStopsRecording) {
  auto a = random_tensor({1, 1, 2, 2}, 4);
  {
    NoGradGuard guard;
    const auto b = mul(a, a);
    EXPECT_FALSE(b.requires_grad());
    EXPECT_TRUE(Tape<double>::active().empty());
  }
  EXPECT_TRUE(grad_enabled());
}

TEST(Tensor, BackwardRejectsNonScalar) {
  auto a = random_tensor({1, 1, 2, 2}, 5);
  const auto b = relu(a);
  EXPECT_THROW(backward(b), ShapeError);
  Tape<double>::active().clear();
}

TEST(Tensor, MeanOfEmptyIsZero) {
  EXPECT_EQ(mean(Tensor<float>(Shape{0, 3, 2, 2})).item(), 0.0f);
}

TEST(Tensor, ConcatLaysOutPartsInOrder) {
  Tensor<float> a(Shape{1, 1, 1, 2}, {1, 2});
  Tensor<float> b(Shape{1, 2, 1, 2}, {3, 4, 5, 6});
  const auto c = concat_channels<float>({a, b});
  EXPECT_EQ(c.shape(), (Shape{1, 3, 1, 2}));
  EXPECT_EQ(std::vector<float>(c.data().begin(), c.data().end()), (std::vector<float>{1, 2, 3, 4, 5, 6}));
}

TEST(Tensor, CloneIsIndependent) {
  Tensor<float> a(Shape{1, 1, 1, 2}, {1, 2});
  auto b = a.clone();
  b.mutable_data()[0] = 7;
  EXPECT_EQ(a.data()[0], 1.0f);
  EXPECT_FALSE(a.same_storage(b));
}

// Finite-difference checks. Elementwise ops in [-1, 1], away from kinks,
// must agree to 1e-5; the add/concat examples to 1e-6.

TEST(TensorGrad, AddRandomPair) {
  auto a = random_tensor({1, 4, 8, 8}, 10);
  auto b = random_tensor({1, 4, 8, 8}, 11);
  const auto r = oracle::grad_check([&] { return oracle::project(add(a, b), 99); }, {a, b}, 1e-6);
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(TensorGrad, AddBroadcastBatch) {
  auto a = random_tensor({3, 2, 3, 3}, 12);
  auto b = random_tensor({1, 2, 3, 3}, 13);
  const auto r = oracle::grad_check([&] { return oracle::project(add(a, b), 98); }, {a, b}, 1e-6);
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(TensorGrad, ConcatSliceBack) {
  auto a = random_tensor({2, 1, 3, 3}, 14);
  auto b = random_tensor({2, 3, 3, 3}, 15);
  auto c = random_tensor({2, 2, 3, 3}, 16);
  const auto r = oracle::grad_check([&] { return oracle::project(concat_channels<double>({a, b, c}), 97); },
                                    {a, b, c}, 1e-6);
  EXPECT_LT(r.max_rel_err, 1e-6);
}

struct UnaryCase {
  const char* name;
  std::function<Tensor<double>(const Tensor<double>&)> op;
  std::vector<double> kinks;
};

class TensorUnaryGrad : public ::testing::TestWithParam<UnaryCase> {};

TEST_P(TensorUnaryGrad, MatchesFiniteDifferences) {
  const auto& c = GetParam();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor({2, 3, 4, 4}, 100 + seed);
    oracle::avoid_kinks(x, c.kinks);
    const auto r = oracle::grad_check([&] { return oracle::project(c.op(x), seed); }, {x}, 1e-5);
    EXPECT_LT(r.max_rel_err, 1e-5) << c.name << " seed " << seed;
    EXPECT_EQ(r.retried, 0u) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Ops, TensorUnaryGrad,
    ::testing::Values(
        UnaryCase{"relu", [](const Tensor<double>& x) { return relu(x); }, {0.0}},
        UnaryCase{"leaky", [](const Tensor<double>& x) { return leaky_relu(x, 0.2); }, {0.0}},
        UnaryCase{"clamp", [](const Tensor<double>& x) { return clamp(x, -0.5, 0.5); }, {-0.5, 0.5}},
        UnaryCase{"abs", [](const Tensor<double>& x) { return abs(x); }, {0.0}},
        UnaryCase{"square", [](const Tensor<double>& x) { return square(x); }, {}},
        UnaryCase{"softplus", [](const Tensor<double>& x) { return softplus(x); }, {}},
        UnaryCase{"scale", [](const Tensor<double>& x) { return scale(x, -2.5); }, {}},
        UnaryCase{"mean", [](const Tensor<double>& x) { return mean(x); }, {}},
        UnaryCase{"sum", [](const Tensor<double>& x) { return sum(x); }, {}},
        UnaryCase{"mean_spatial", [](const Tensor<double>& x) { return mean_spatial(x); }, {}},
        UnaryCase{"self_mul", [](const Tensor<double>& x) { return mul(x, x); }, {}},
        UnaryCase{"self_sub", [](const Tensor<double>& x) { return sub(x, scale(x, 0.25)); }, {}}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(TensorGrad, MulAndSubBinary) {
  auto a = random_tensor({2, 2, 3, 3}, 20);
  auto b = random_tensor({2, 2, 3, 3}, 21);
  auto r = oracle::grad_check([&] { return oracle::project(mul(a, b), 1); }, {a, b}, 1e-5);
  EXPECT_LT(r.max_rel_err, 1e-5);
  r = oracle::grad_check([&] { return oracle::project(sub(a, b), 2); }, {a, b}, 1e-5);
  EXPECT_LT(r.max_rel_err, 1e-5);
}

TEST(Tensor, SoftplusIsStableForLargeInputs) {
  Tensor<double> x(Shape{1, 1, 1, 2}, {800.0, -800.0});
  const auto y = softplus(x);
  EXPECT_DOUBLE_EQ(y.data()[0], 800.0);
  EXPECT_GE(y.data()[1], 0.0);
  EXPECT_TRUE(std::isfinite(y.data()[1]));
}

TEST(Tensor, CastRoundTripsFloat) {
  Rng rng(7);
  const auto f = Tensor<float>::uniform({1, 2, 2, 2}, -1, 1, rng);
  const auto back = cast<float>(cast<double>(f));
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(f.data()[i], back.data()[i]);
}
