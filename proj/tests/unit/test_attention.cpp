#include <gtest/gtest.h>

#include <random>

#include "cgam/attention.hpp"
#include "cgam/grad_check.hpp"
#include "cgam/seg_model.hpp"
#include "oracles.hpp"

using namespace cgam;

namespace {

// Attention params with every tensor randomized (psi and bias included) so
// the forward pass is not the identity.
CgamParams randomized(int c, std::uint64_t seed) {
  CgamParams p = cgam_init(c, seed);
  std::mt19937_64 rng(seed + 1);
  for (auto& t : p.tensors()) {
    const auto v = oracle::random_values(rng, t.numel());
    std::copy(v.begin(), v.end(), t.data().begin());
  }
  return p;
}

}  // namespace

TEST(Cgam, ParameterCountClosedForm) {
  EXPECT_EQ(cgam_param_count(32), 1072u);
  EXPECT_EQ(cgam_param_count(16), 2u * 8 + 16 * 8 + 8 * 16 + 8);
  EXPECT_EQ(cgam_init(32, 0).parameter_count(), cgam_param_count(32));
  EXPECT_THROW(cgam_param_count(7), std::invalid_argument);
}

TEST(Cgam, ParameterCountIndependentOfInputSize) {
  ModelConfig cfg;
  cfg.channels = 32;
  cfg.encoder_depth = 4;
  const SegModel model = SegModel::build(cfg, 0);
  std::vector<std::size_t> counts;
  for (std::size_t size : {64u, 128u, 256u}) {
    Tape tape;
    Tensor feat = model.forward_g(tape, Tensor::zeros({1, 3, size, size}), Tensor::zeros({1, 2, size, size}));
    CgamParams p = cgam_init(static_cast<int>(feat.dim(1)), 1);
    Tensor cd = downsample_clicks(Tensor::zeros({1, 2, size, size}), feat.dim(2), feat.dim(3));
    const CgamOutput out = cgam_forward(tape, p, feat, cd);
    EXPECT_EQ(out.features.shape(), feat.shape());
    counts.push_back(p.parameter_count());
  }
  EXPECT_EQ(counts[0], counts[1]);
  EXPECT_EQ(counts[1], counts[2]);
  EXPECT_EQ(counts[0], 1072u);
}

TEST(Cgam, InitIsExactIdentity) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    CgamParams p = cgam_init(8, trial);
    Tensor m = oracle::random_tensor(rng, {1, 8, 5, 6}, false, -3.0, 3.0);
    Tensor cd = oracle::random_tensor(rng, {1, 2, 5, 6}, false, 0.0, 1.0);
    Tape tape;
    const CgamOutput out = cgam_forward(tape, p, m, cd);
    EXPECT_EQ(oracle::max_abs_diff(out.features.data(), m.data()), 0.0);
    for (double a : out.attention.data()) EXPECT_EQ(a, 1.0);
  }
}

TEST(Cgam, ForwardMatchesPerPixelReference) {
  std::mt19937_64 rng(31);
  for (int c : {2, 4, 8}) {
    for (int trial = 0; trial < 8; ++trial) {
      CgamParams p = randomized(c, 100 * c + trial);
      Tensor m = oracle::random_tensor(rng, {2, static_cast<std::size_t>(c), 4, 3});
      Tensor cd = oracle::random_tensor(rng, {2, 2, 4, 3}, false, 0.0, 1.0);
      Tape tape;
      const CgamOutput out = cgam_forward(tape, p, m, cd);
      const auto ref = oracle::cgam(p, m, cd);
      EXPECT_LE(oracle::max_abs_diff(out.features.data(), ref.features), 1e-12);
      EXPECT_LE(oracle::max_abs_diff(out.attention.data(), ref.attention), 1e-12);
    }
  }
}

TEST(Cgam, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    CgamParams p = randomized(4, 500 + trial);
    Tensor m = oracle::random_tensor(rng, {1, 4, 3, 3});
    Tensor cd = oracle::random_tensor(rng, {1, 2, 3, 3}, false, 0.0, 1.0);
    Tensor w = oracle::random_tensor(rng, {1, 4, 3, 3});
    auto params = p.tensors();
    const auto r = grad_check(
        [&](Tape& t) { return ops::sum(t, ops::mul(t, cgam_forward(t, p, m, cd).features, w)); }, params);
    EXPECT_LT(r.max_relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(Cgam, RejectsMismatchedShapes) {
  CgamParams p = cgam_init(4, 0);
  Tape tape;
  EXPECT_THROW(cgam_forward(tape, p, Tensor::zeros({1, 6, 2, 2}), Tensor::zeros({1, 2, 2, 2})), ShapeError);
  EXPECT_THROW(cgam_forward(tape, p, Tensor::zeros({1, 4, 2, 2}), Tensor::zeros({1, 2, 3, 2})), ShapeError);
}

TEST(Cgam, CloneAssignIdentical) {
  CgamParams a = randomized(4, 1);
  CgamParams b = a.clone();
  EXPECT_TRUE(a.identical(b));
  b.psi.data()[0] += 1.0;
  EXPECT_FALSE(a.identical(b));
  Tensor handle = a.psi;
  a.assign(b);
  EXPECT_TRUE(a.identical(b));
  EXPECT_EQ(handle.data()[0], b.psi.data()[0]) << "assign writes through existing handles";
}

TEST(Cgam, DownsampleIsAreaAverage) {
  std::mt19937_64 rng(51);
  for (std::size_t in : {8u, 12u, 16u}) {
    for (std::size_t out : {1u, 2u, 4u}) {
      Tensor maps = oracle::random_tensor(rng, {1, 2, in, in}, false, 0.0, 1.0);
      Tensor d = downsample_clicks(maps, out, out);
      const std::size_t f = in / out;
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < out; ++y)
          for (std::size_t x = 0; x < out; ++x) {
            double acc = 0;
            for (std::size_t yy = y * f; yy < (y + 1) * f; ++yy)
              for (std::size_t xx = x * f; xx < (x + 1) * f; ++xx) acc += maps.data()[(c * in + yy) * in + xx];
            EXPECT_NEAR(d.data()[(c * out + y) * out + x], acc / (f * f), 1e-12);
          }
    }
  }
  EXPECT_THROW(downsample_clicks(Tensor::zeros({1, 2, 4, 4}), 8, 8), std::invalid_argument);
}

TEST(Cgam, HeatmapRangeAndIdentity) {
  Tensor ones = Tensor::full({1, 4, 3, 3}, 1.0);
  const Image flat = attention_heatmap(ones, 12, 12);
  EXPECT_EQ(flat.channels, 1u);
  for (double v : flat.pixels) EXPECT_EQ(v, 0.0);

  std::mt19937_64 rng(61);
  Tensor a = oracle::random_tensor(rng, {1, 4, 3, 3}, false, 0.0, 2.0);
  const Image heat = attention_heatmap(a, 12, 12);
  double peak = 0.0;
  for (double v : heat.pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    peak = std::max(peak, v);
  }
  EXPECT_GT(peak, 0.5);
}
