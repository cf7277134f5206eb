#include "cgam/seg_model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace cgam {
namespace {

ConvLayer make_layer(std::mt19937_64& rng, std::size_t in_c, std::size_t out_c, std::size_t k,
                     int stride, bool relu) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> w(out_c * in_c * k * k);
  for (auto& v : w) v = dist(rng);
  ConvLayer layer;
  layer.weight = Tensor::from({out_c, in_c, k, k}, std::move(w));
  layer.bias = Tensor::zeros({out_c});
  layer.stride = stride;
  layer.padding = static_cast<int>(k / 2);
  layer.relu = relu;
  return layer;
}

Tensor run_stack(Tape& tape, const std::vector<ConvLayer>& layers, Tensor x) {
  for (const auto& layer : layers) {
    x = ops::conv2d(tape, x, layer.weight, layer.bias, layer.stride, layer.padding);
    if (layer.relu) x = ops::relu(tape, x);
  }
  return x;
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"channels", c.channels},
          {"encoder_depth", c.encoder_depth},
          {"input_size", c.input_size},
          {"seed", c.seed}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.channels = j.value("channels", c.channels);
  c.encoder_depth = j.value("encoder_depth", c.encoder_depth);
  c.input_size = j.value("input_size", c.input_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

void validate(const ModelConfig& config) {
  if (config.channels < 4 || config.channels % 2 != 0) {
    throw std::invalid_argument("model channels must be even and >= 4, got " +
                                std::to_string(config.channels));
  }
  if (config.encoder_depth < 4) {
    throw std::invalid_argument("encoder_depth must be >= 4, got " +
                                std::to_string(config.encoder_depth));
  }
  if (config.input_size < SegModel::kStride || config.input_size % SegModel::kStride != 0) {
    throw std::invalid_argument("input_size must be a positive multiple of 4, got " +
                                std::to_string(config.input_size));
  }
}

ModelConfig model_config_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  if (j.contains("model")) j = j.at("model");
  ModelConfig c = config_from(j);
  validate(c);
  return c;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_config_from_json(ss.str());
}

std::string to_json(const ModelConfig& config) { return config_json(config).dump(); }

SegModel SegModel::build(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  SegModel model;
  model.config_ = config;
  model.config_.seed = seed;
  std::mt19937_64 rng(seed);
  const auto c = static_cast<std::size_t>(config.channels);
  const std::size_t half = c / 2;
  const std::size_t in_c = kImageChannels + kClickChannels;

  model.g_layers_.push_back(make_layer(rng, in_c, half, 3, 1, true));
  model.g_layers_.push_back(make_layer(rng, half, c, 3, 2, true));
  model.g_layers_.push_back(make_layer(rng, c, c, 3, 1, true));
  model.g_layers_.push_back(make_layer(rng, c, c, 3, 2, true));
  for (int i = 4; i < config.encoder_depth; ++i) {
    model.g_layers_.push_back(make_layer(rng, c, c, 3, 1, true));
  }

  model.h_layers_.push_back(make_layer(rng, c, c, 3, 1, true));
  model.h_layers_.push_back(make_layer(rng, c, half, 3, 1, true));
  model.h_layers_.push_back(make_layer(rng, half, 1, 1, 1, false));
  return model;
}

Tensor SegModel::forward_g(Tape& tape, const Tensor& image, const Tensor& click_maps) const {
  if (image.rank() != 4 || image.dim(1) != kImageChannels) {
    throw ShapeError("forward_g expects image [N,3,H,W], got " + to_string(image.shape()));
  }
  if (click_maps.rank() != 4 || click_maps.dim(1) != kClickChannels ||
      click_maps.dim(2) != image.dim(2) || click_maps.dim(3) != image.dim(3)) {
    throw ShapeError("forward_g click maps " + to_string(click_maps.shape()) +
                     " do not match image " + to_string(image.shape()));
  }
  if (image.dim(2) % kStride != 0 || image.dim(3) % kStride != 0) {
    throw ShapeError("image size " + to_string(image.shape()) + " is not divisible by stride 4");
  }
  return run_stack(tape, g_layers_, ops::concat_channels(tape, image, click_maps));
}

Tensor SegModel::forward_h(Tape& tape, const Tensor& feature) const {
  if (feature.rank() != 4 || feature.dim(1) != static_cast<std::size_t>(config_.channels)) {
    throw ShapeError("forward_h expects " + std::to_string(config_.channels) +
                     " feature channels, got " + to_string(feature.shape()));
  }
  Tensor logits = run_stack(tape, h_layers_, feature);
  return ops::bilinear_resize(tape, logits, feature.dim(2) * kStride, feature.dim(3) * kStride);
}

Tensor SegModel::forward(Tape& tape, const Tensor& image, const Tensor& click_maps) const {
  return forward_h(tape, forward_g(tape, image, click_maps));
}

std::vector<NamedTensor> SegModel::named_parameters() const {
  std::vector<NamedTensor> out;
  auto add = [&out](const std::string& prefix, const std::vector<ConvLayer>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.push_back({prefix + "." + std::to_string(i) + ".weight", layers[i].weight});
      out.push_back({prefix + "." + std::to_string(i) + ".bias", layers[i].bias});
    }
  };
  add("g", g_layers_);
  add("h", h_layers_);
  return out;
}

std::vector<Tensor> SegModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t SegModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

void SegModel::set_trainable(bool trainable) {
  for (auto& p : parameters()) p.set_requires_grad(trainable);
}

void save_weights(const SegModel& model, const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["kind"] = "segmodel";
  meta["config"] = config_json(model.config());
  meta["trained_epochs"] = model.trained_epochs();
  WeightContainer container;
  container.metadata_json = meta.dump();
  container.entries = model.named_parameters();
  write_weights(path, container);
}

SegModel load_weights(const std::filesystem::path& path) {
  WeightContainer container = read_weights(path);
  const auto meta = nlohmann::json::parse(container.metadata_json);
  if (meta.value("kind", "") != "segmodel" || !meta.contains("config")) {
    throw CorruptFileError(path.string() + ": not a segmentation model weights file");
  }
  const ModelConfig config = config_from(meta.at("config"));
  SegModel model = SegModel::build(config, config.seed);
  auto params = model.named_parameters();
  if (params.size() != container.entries.size()) {
    throw CorruptFileError(path.string() + ": expected " + std::to_string(params.size()) +
                           " tensors, file has " + std::to_string(container.entries.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& stored = container.entries[i];
    if (stored.name != params[i].name || stored.tensor.shape() != params[i].tensor.shape()) {
      throw CorruptFileError(path.string() + ": entry " + stored.name + " " +
                             to_string(stored.tensor.shape()) + " does not match expected " +
                             params[i].name + " " + to_string(params[i].tensor.shape()));
    }
    auto dst = params[i].tensor.data();
    const auto src = stored.tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  model.add_trained_epochs(meta.value("trained_epochs", 0));
  return model;
}

SegModel load_weights(const std::filesystem::path& path, const ModelConfig& expected) {
  SegModel model = load_weights(path);
  const ModelConfig& got = model.config();
  std::vector<std::string> diffs;
  auto check = [&diffs](const char* field, auto stored, auto wanted) {
    if (stored != wanted) {
      diffs.push_back(std::string(field) + ": file=" + std::to_string(stored) +
                      " expected=" + std::to_string(wanted));
    }
  };
  check("channels", got.channels, expected.channels);
  check("encoder_depth", got.encoder_depth, expected.encoder_depth);
  check("input_size", got.input_size, expected.input_size);
  check("seed", got.seed, expected.seed);
  if (!diffs.empty()) {
    std::string msg = path.string() + ": model config mismatch";
    for (const auto& d : diffs) msg += "; " + d;
    throw std::invalid_argument(msg);
  }
  return model;
}

}  // namespace cgam
