#include <gtest/gtest.h>

#include <random>

#include "cgam/grad_check.hpp"
#include "cgam/tensor.hpp"
#include "oracles.hpp"

using namespace cgam;

TEST(Tensor, FactoriesAndShapes) {
  Tensor z = Tensor::zeros({2, 3});
  EXPECT_EQ(z.numel(), 6u);
  EXPECT_EQ(z.rank(), 2u);
  EXPECT_EQ(z.dim(1), 3u);
  EXPECT_THROW(z.dim(2), ShapeError);
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4.5).item(), 4.5);
  EXPECT_THROW(z.item(), ShapeError);
  EXPECT_EQ(to_string(Shape{1, 2, 3}), "[1,2,3]");
}

TEST(Tensor, CopiesShareStorageCloneDoesNot) {
  Tensor a = Tensor::from({3}, {1, 2, 3});
  Tensor b = a;
  b.data()[0] = 10;
  EXPECT_EQ(a.data()[0], 10);
  EXPECT_TRUE(a.shares_storage(b));
  Tensor c = a.clone();
  c.data()[1] = -1;
  EXPECT_EQ(a.data()[1], 2);
  Tensor d = Tensor::from({1}, {1}, true).detach();
  EXPECT_FALSE(d.requires_grad());
}

TEST(Tensor, UndefinedTensorThrows) {
  Tensor t;
  EXPECT_FALSE(t.defined());
  EXPECT_THROW(t.shape(), std::logic_error);
}

TEST(Tape, BackwardPreconditions) {
  Tape tape;
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0, true)), std::logic_error);
  Tape t2;
  Tensor frozen = Tensor::from({2}, {1, 2});
  Tensor s = ops::sum(t2, frozen);
  EXPECT_TRUE(t2.empty());
  EXPECT_THROW(t2.backward(s), std::logic_error);
  Tape t3;
  Tensor v = ops::scale(t3, x, 2.0);
  EXPECT_THROW(t3.backward(v), ShapeError);
}

TEST(Tape, SimpleChainGradient) {
  Tape tape;
  Tensor x = Tensor::from({3}, {1, -2, 3}, true);
  Tensor loss = ops::sum(tape, ops::square(tape, x));
  tape.backward(loss);
  ASSERT_TRUE(x.has_grad());
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 6.0);
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  Tape tape;
  Tensor x = Tensor::from({1}, {3}, true);
  Tensor loss = ops::add(tape, ops::mul(tape, x, x), x);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Ops, ReluSubgradientAtZeroIsZero) {
  Tape tape;
  Tensor x = Tensor::from({3}, {-1, 0, 2}, true);
  tape.backward(ops::sum(tape, ops::relu(tape, x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Ops, ElementwiseForwardValues) {
  Tape tape;
  Tensor a = Tensor::from({2}, {1, 4});
  Tensor b = Tensor::from({2}, {3, -2});
  EXPECT_EQ(ops::add(tape, a, b).data()[1], 2);
  EXPECT_EQ(ops::sub(tape, a, b).data()[0], -2);
  EXPECT_EQ(ops::mul(tape, a, b).data()[1], -8);
  EXPECT_EQ(ops::mul(tape, a, Tensor::scalar(2)).data()[1], 8);
  EXPECT_EQ(ops::add_scalar(tape, a, 0.5).data()[0], 1.5);
  EXPECT_EQ(ops::scale(tape, a, -1).data()[1], -4);
  EXPECT_EQ(ops::mean(tape, a).item(), 2.5);
  EXPECT_NEAR(ops::sigmoid(tape, Tensor::from({1}, {0})).item(), 0.5, 1e-15);
  EXPECT_THROW(ops::add(tape, a, Tensor::zeros({3})), ShapeError);
  EXPECT_THROW(ops::add(tape, Tensor::scalar(1), a), ShapeError) << "only the right operand broadcasts";
}

TEST(Ops, GatherAndConcat) {
  Tape tape;
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  std::vector<std::size_t> idx{3, 0, 3};
  Tensor g = ops::gather(tape, x, idx);
  EXPECT_EQ(g.shape(), (Shape{3}));
  EXPECT_EQ(g.data()[0], 4);
  EXPECT_EQ(g.data()[1], 1);
  std::vector<std::size_t> bad{4};
  EXPECT_THROW(ops::gather(tape, x, bad), ShapeError);

  Tensor c = ops::concat_channels(tape, x, Tensor::full({1, 2, 2, 2}, 9));
  EXPECT_EQ(c.shape(), (Shape{1, 3, 2, 2}));
  EXPECT_EQ(c.data()[3], 4);
  EXPECT_EQ(c.data()[4], 9);
}

TEST(Ops, ConvRejectsBadGeometry) {
  Tape tape;
  EXPECT_THROW(ops::conv2d(tape, Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3})), ShapeError);
  EXPECT_THROW(ops::conv2d(tape, Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 2, 3, 3}), 0, 0),
               std::invalid_argument);
  EXPECT_THROW(ops::conv2d(tape, Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({1, 2, 3, 3})), ShapeError);
}

// Exhaustive small conv geometries against the direct loop.
TEST(OpsOracle, Conv2dMatchesDirectLoops) {
  std::mt19937_64 rng(11);
  int cases = 0;
  for (std::size_t n : {1, 2})
    for (std::size_t ci : {1, 3, 4})
      for (std::size_t co : {1, 2, 4})
        for (std::size_t hw : {4, 5, 8})
          for (std::size_t k : {1, 3})
            for (int stride : {1, 2})
              for (int pad : {0, 1}) {
                for (bool with_bias : {false, true}) {
                  Tensor x = oracle::random_tensor(rng, {n, ci, hw, hw});
                  Tensor w = oracle::random_tensor(rng, {co, ci, k, k});
                  Tensor b = with_bias ? oracle::random_tensor(rng, {co}) : Tensor{};
                  Tape tape;
                  Tensor y = ops::conv2d(tape, x, w, b, stride, pad);
                  const auto ref = oracle::conv2d(x, w, b, stride, pad);
                  ASSERT_EQ(y.numel(), ref.size());
                  EXPECT_LE(oracle::max_abs_diff(y.data(), ref), 1e-12);
                  ++cases;
                }
              }
  EXPECT_GT(cases, 400);
}

TEST(OpsOracle, BilinearMatchesScalarReference) {
  std::mt19937_64 rng(5);
  for (std::size_t h : {1, 2, 3, 8})
    for (std::size_t w : {1, 4, 5})
      for (std::size_t oh : {1, 4, 7, 16})
        for (std::size_t ow : {2, 8, 9}) {
          Tensor x = oracle::random_tensor(rng, {1, 2, h, w});
          Tape tape;
          Tensor y = ops::bilinear_resize(tape, x, oh, ow);
          EXPECT_LE(oracle::max_abs_diff(y.data(), oracle::bilinear(x, oh, ow)), 1e-12)
              << h << "x" << w << " -> " << oh << "x" << ow;
        }
}

TEST(OpsOracle, BilinearIdentityAtSameSize) {
  std::mt19937_64 rng(6);
  Tensor x = oracle::random_tensor(rng, {1, 1, 6, 7});
  Tape tape;
  Tensor y = ops::bilinear_resize(tape, x, 6, 7);
  EXPECT_EQ(oracle::max_abs_diff(y.data(), x.data()), 0.0);
}

// Finite-difference checks: 20 random instances per op.
class GradCheckOps : public ::testing::TestWithParam<int> {};

namespace {

double check(const ScalarFunction& fn, std::vector<Tensor> inputs) {
  const auto r = grad_check(fn, inputs);
  EXPECT_GT(r.checked, 0u);
  return r.max_relative_error;
}

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor reduce(Tape& tape, const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w = oracle::random_tensor(rng, y.shape());
  return ops::sum(tape, ops::mul(tape, y, w));
}

}  // namespace

TEST_P(GradCheckOps, AllOps) {
  const int seed = GetParam();
  std::mt19937_64 rng(1000 + seed);
  std::uniform_int_distribution<int> small(1, 3);
  const std::size_t n = small(rng), c = small(rng), h = 2 + small(rng), w = 2 + small(rng);

  Tensor x = oracle::random_tensor(rng, {n, c, h, w}, true);
  Tensor y = oracle::random_tensor(rng, {n, c, h, w}, true);
  Tensor s = oracle::random_tensor(rng, {1}, true);

  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::relu(t, x), seed); }, {x}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::sigmoid(t, x), seed); }, {x}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::square(t, x), seed); }, {x}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::add(t, x, y), seed); }, {x, y}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::sub(t, x, y), seed); }, {x, y}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::mul(t, x, y), seed); }, {x, y}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::mul(t, x, s), seed); }, {x, s}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::add(t, x, s), seed); }, {x, s}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::add_scalar(t, x, 0.3), seed); }, {x}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::scale(t, x, -1.7), seed); }, {x}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return ops::mean(t, ops::square(t, x)); }, {x}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::concat_channels(t, x, y), seed); }, {x, y}), 1e-4);
  std::vector<std::size_t> idx{0, x.numel() - 1, 0, x.numel() / 2};
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::gather(t, x, idx), seed); }, {x}), 1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::bilinear_resize(t, x, 2 * h + 1, 3 * w), seed); }, {x}),
            1e-4);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::bilinear_resize(t, x, 2, 2), seed); }, {x}), 1e-4);

  const std::size_t co = small(rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      Tensor wt = oracle::random_tensor(rng, {co, c, 3, 3}, true);
      Tensor b = oracle::random_tensor(rng, {co}, true);
      EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::conv2d(t, x, wt, b, stride, pad), seed); }, {x, wt, b}),
                1e-4)
          << "stride " << stride << " pad " << pad;
    }
  }
  Tensor w1 = oracle::random_tensor(rng, {co, c, 1, 1}, true);
  EXPECT_LT(check([&](Tape& t) { return reduce(t, ops::conv2d(t, x, w1), seed); }, {x, w1}), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Instances, GradCheckOps, ::testing::Range(0, 20));

TEST(GradCheck, DetectsWrongGradient) {
  Tensor x = Tensor::from({2}, {0.3, -0.4}, true);
  // Claims d/dx = x instead of 2x.
  auto bad = [&](Tape& tape) {
    Tensor out = Tensor::from({1}, {x.data()[0] * x.data()[0] + x.data()[1] * x.data()[1]}, true);
    tape.record(out, [x](std::span<const double> g) mutable {
      auto gx = x.grad_buffer();
      gx[0] += g[0] * x.data()[0];
      gx[1] += g[0] * x.data()[1];
    });
    return out;
  };
  std::vector<Tensor> in{x};
  EXPECT_GT(grad_check(bad, in).max_relative_error, 0.1);
}

TEST(GradCheck, ExcludesKinks) {
  Tensor x = Tensor::from({3}, {0.0, 0.5, -0.5}, true);
  std::vector<Tensor> in{x};
  const auto r = grad_check([&](Tape& t) { return ops::sum(t, ops::relu(t, x)); }, in);
  EXPECT_EQ(r.excluded_kinks, 1u);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_LT(r.max_relative_error, 1e-8);
}
