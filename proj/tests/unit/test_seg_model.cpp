#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cgam/grad_check.hpp"
#include "cgam/seg_model.hpp"
#include "cgam/weights_io.hpp"
#include "oracles.hpp"

using namespace cgam;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cgam_seg_model_tests";
  fs::create_directories(dir);
  return dir / name;
}

ModelConfig small_config() {
  ModelConfig c;
  c.channels = 8;
  c.encoder_depth = 5;
  c.input_size = 16;
  return c;
}

}  // namespace

TEST(ModelConfig, ValidationRejectsBadValues) {
  ModelConfig c = small_config();
  EXPECT_NO_THROW(validate(c));
  c.channels = 7;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = small_config();
  c.encoder_depth = 3;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = small_config();
  c.input_size = 30;
  EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(ModelConfig, JsonRoundTripAndNestedKey) {
  ModelConfig c = small_config();
  c.seed = 99;
  EXPECT_EQ(model_config_from_json(to_json(c)), c);
  EXPECT_EQ(model_config_from_json(R"({"model": {"channels": 12, "encoder_depth": 4}})").channels, 12);
}

TEST(SegModel, ShapesThroughGAndH) {
  SegModel m = SegModel::build(small_config(), 1);
  Tape tape;
  std::mt19937_64 rng(2);
  Tensor image = oracle::random_tensor(rng, {2, 3, 16, 20}, false, 0.0, 1.0);
  Tensor clicks = Tensor::zeros({2, 2, 16, 20});
  Tensor feat = m.forward_g(tape, image, clicks);
  EXPECT_EQ(feat.shape(), (Shape{2, 8, 4, 5}));
  Tensor logits = m.forward_h(tape, feat);
  EXPECT_EQ(logits.shape(), (Shape{2, 1, 16, 20}));
  EXPECT_TRUE(tape.empty()) << "frozen weights record nothing";
}

TEST(SegModel, RejectsBadInputs) {
  SegModel m = SegModel::build(small_config(), 1);
  Tape tape;
  EXPECT_THROW(m.forward_g(tape, Tensor::zeros({1, 3, 18, 16}), Tensor::zeros({1, 2, 18, 16})), ShapeError);
  EXPECT_THROW(m.forward_g(tape, Tensor::zeros({1, 1, 16, 16}), Tensor::zeros({1, 2, 16, 16})), ShapeError);
  EXPECT_THROW(m.forward_g(tape, Tensor::zeros({1, 3, 16, 16}), Tensor::zeros({1, 2, 8, 8})), ShapeError);
  EXPECT_THROW(m.forward_h(tape, Tensor::zeros({1, 4, 4, 4})), ShapeError);
}

TEST(SegModel, ParameterNamesAndCount) {
  SegModel m = SegModel::build(small_config(), 1);
  const auto named = m.named_parameters();
  ASSERT_EQ(named.size(), 2u * (5 + 3));
  EXPECT_EQ(named.front().name, "g.0.weight");
  EXPECT_EQ(named.back().name, "h.2.bias");
  std::size_t n = 0;
  for (const auto& p : named) n += p.tensor.numel();
  EXPECT_EQ(m.parameter_count(), n);
  // 5->4 (3x3), 4->8 s2, 8->8, 8->8 s2, 8->8 ; head 8->8, 8->4, 4->1 (1x1)
  const std::size_t expected = (5 * 4 * 9 + 4) + (4 * 8 * 9 + 8) + 3 * (8 * 8 * 9 + 8) + (8 * 8 * 9 + 8) +
                               (8 * 4 * 9 + 4) + (4 * 1 + 1);
  EXPECT_EQ(n, expected);
}

TEST(SegModel, BuildIsDeterministicPerSeed) {
  const SegModel a = SegModel::build(small_config(), 5);
  const SegModel b = SegModel::build(small_config(), 5);
  const SegModel c = SegModel::build(small_config(), 6);
  EXPECT_EQ(oracle::max_abs_diff(a.parameters()[0].data(), b.parameters()[0].data()), 0.0);
  EXPECT_GT(oracle::max_abs_diff(a.parameters()[0].data(), c.parameters()[0].data()), 0.0);
}

TEST(SegModel, TrainableGradientsMatchFiniteDifferences) {
  ModelConfig cfg = small_config();
  cfg.channels = 4;
  cfg.encoder_depth = 4;
  SegModel m = SegModel::build(cfg, 3);
  std::mt19937_64 rng(8);
  Tensor image = oracle::random_tensor(rng, {1, 3, 8, 8}, false, 0.0, 1.0);
  Tensor clicks = Tensor::zeros({1, 2, 8, 8});
  std::vector<Tensor> params{m.h_layers()[1].weight, m.g_layers()[0].bias};
  const auto r = grad_check(
      [&](Tape& t) { return ops::mean(t, ops::square(t, m.forward(t, image, clicks))); }, params);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Weights, RoundTripPreservesValuesConfigAndEpochs) {
  SegModel m = SegModel::build(small_config(), 11);
  m.add_trained_epochs(3);
  const auto path = temp_file("roundtrip.cgw");
  save_weights(m, path);
  SegModel back = load_weights(path);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.trained_epochs(), 3);
  const auto a = m.parameters(), b = back.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(oracle::max_abs_diff(a[i].data(), b[i].data()), 0.0);
  for (const auto& p : b) EXPECT_FALSE(p.requires_grad());
}

TEST(Weights, ConfigMismatchListsFields) {
  SegModel m = SegModel::build(small_config(), 11);
  const auto path = temp_file("mismatch.cgw");
  save_weights(m, path);
  ModelConfig other = small_config();
  other.channels = 16;
  other.input_size = 32;
  other.seed = 11;
  try {
    load_weights(path, other);
    FAIL() << "expected a mismatch";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("channels"), std::string::npos);
    EXPECT_NE(msg.find("input_size"), std::string::npos);
    EXPECT_EQ(msg.find("encoder_depth"), std::string::npos);
  }
  ModelConfig same = small_config();
  same.seed = 11;
  EXPECT_NO_THROW(load_weights(path, same));
}

TEST(Weights, ContainerRoundTripArbitraryTensors) {
  WeightContainer c;
  c.metadata_json = R"({"note":"x"})";
  c.entries.push_back({"a", Tensor::from({2, 2}, {1.5, -2.25, 1e-300, 7})});
  c.entries.push_back({"b", Tensor::from({1}, {3})});
  const auto path = temp_file("container.cgw");
  write_weights(path, c);
  const auto back = read_weights(path);
  EXPECT_EQ(back.metadata_json, c.metadata_json);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[0].name, "a");
  EXPECT_EQ(back.entries[0].tensor.shape(), (Shape{2, 2}));
  EXPECT_EQ(back.entries[0].tensor.data()[2], 1e-300);
}

TEST(Weights, CorruptionIsDetected) {
  SegModel m = SegModel::build(small_config(), 1);
  const auto path = temp_file("corrupt.cgw");
  save_weights(m, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << data;
  };

  std::string flipped = bytes;
  flipped[bytes.size() - 20] ^= 0x40;  // inside the payload
  write(flipped);
  EXPECT_THROW(load_weights(path), CorruptFileError);

  write(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_weights(path), CorruptFileError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  EXPECT_THROW(load_weights(path), CorruptFileError);

  std::string future = bytes;
  future[8] = 9;  // version field
  write(future);
  EXPECT_THROW(load_weights(path), FormatVersionError);

  EXPECT_THROW(load_weights(temp_file("does_not_exist.cgw")), std::runtime_error);
}
