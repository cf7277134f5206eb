#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cgam/adam.hpp"
#include "oracles.hpp"

using namespace cgam;

namespace {

// Scalar Adam written straight from the update rule.
struct ScalarAdam {
  double lr, b1, b2, eps;
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST(Adam, MatchesScalarReferenceOverManySteps) {
  std::mt19937_64 rng(3);
  Tensor p = oracle::random_tensor(rng, {4, 3}, true);
  std::vector<double> ref(p.data().begin(), p.data().end());
  std::vector<ScalarAdam> scalar(ref.size(), ScalarAdam{0.01, 0.9, 0.999, 1e-8});
  Adam adam({p}, AdamConfig{0.01, 0.9, 0.999, 1e-8});
  for (int step = 0; step < 50; ++step) {
    const auto g = oracle::random_values(rng, ref.size(), -2.0, 2.0);
    adam.zero_grad();
    p.accumulate_grad(g);
    adam.step();
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = scalar[i].step(ref[i], g[i]);
    EXPECT_LE(oracle::max_abs_diff(p.data(), ref), 1e-14);
  }
  EXPECT_EQ(adam.state().step, 50);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::from({2}, {1.0, -1.0}, true);
  p.accumulate_grad(std::vector<double>{3.0, -0.5});
  Adam adam({p}, AdamConfig{0.1});
  adam.step();
  EXPECT_NEAR(p.data()[0], 0.9, 1e-8);
  EXPECT_NEAR(p.data()[1], -0.9, 1e-8);
}

TEST(Adam, ZeroLearningRateIsExactNoOp) {
  std::mt19937_64 rng(4);
  Tensor p = oracle::random_tensor(rng, {5}, true);
  const Tensor before = p.clone();
  Adam adam({p}, AdamConfig{0.0});
  for (int i = 0; i < 5; ++i) {
    p.accumulate_grad(oracle::random_values(rng, 5));
    adam.step();
  }
  EXPECT_EQ(oracle::max_abs_diff(p.data(), before.data()), 0.0);
}

TEST(Adam, ConvergesOnQuadratic) {
  Tensor p = Tensor::from({3}, {5.0, -3.0, 2.0}, true);
  const std::vector<double> target{1.0, 2.0, -1.0};
  Adam adam({p}, AdamConfig{0.05});
  for (int i = 0; i < 2000; ++i) {
    Tape tape;
    Tensor loss = ops::sum(tape, ops::square(tape, ops::sub(tape, p, Tensor::from({3}, target))));
    adam.zero_grad();
    tape.backward(loss);
    adam.step();
  }
  EXPECT_LE(oracle::max_abs_diff(p.data(), target), 1e-3);
}

TEST(Adam, RejectsMissingGradientAndMismatchedState) {
  Tensor p = Tensor::zeros({2}, true);
  Adam adam({p}, AdamConfig{});
  EXPECT_THROW(adam.step(), std::invalid_argument);

  std::vector<Tensor> params{Tensor::zeros({3}, true)};
  params[0].accumulate_grad(std::vector<double>{1, 1, 1});
  std::vector<Tensor> other{Tensor::zeros({2}, true)};
  AdamState state = make_adam_state(other, AdamConfig{});
  EXPECT_THROW(adam_step(params, state), ShapeError);
  std::vector<Tensor> two{params[0], params[0]};
  EXPECT_THROW(adam_step(two, state), std::invalid_argument);
}

TEST(Adam, StepDoesNotClearGradients) {
  Tensor p = Tensor::zeros({1}, true);
  p.accumulate_grad(std::vector<double>{2.0});
  Adam adam({p}, AdamConfig{});
  adam.step();
  EXPECT_EQ(p.grad()[0], 2.0);
  adam.zero_grad();
  EXPECT_EQ(p.grad()[0], 0.0);
}
