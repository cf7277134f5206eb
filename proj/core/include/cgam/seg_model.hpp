#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cgam/tensor.hpp"
#include "cgam/weights_io.hpp"

namespace cgam {

struct ModelConfig {
  int channels = 32;       // width c of the feature map handed to the attention module
  int encoder_depth = 6;   // conv layers in the feature extractor, two of them stride 2
  int input_size = 128;    // nominal training resolution; forward passes accept any multiple of 4
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

ModelConfig model_config_from_json(const std::string& text);
ModelConfig load_model_config(const std::filesystem::path& path);
std::string to_json(const ModelConfig& config);

// Throws std::invalid_argument when the config cannot describe a model.
void validate(const ModelConfig& config);

struct ConvLayer {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
  int stride = 1;
  int padding = 0;
  bool relu = true;
};

// Toy encoder-decoder with click maps concatenated to the image channels.
//
// forward_g maps [1,5,H,W] (image + two click maps) to the feature map at
// stride 4; forward_h maps that feature map back to full-resolution logits.
class SegModel {
 public:
  static constexpr int kStride = 4;
  static constexpr int kImageChannels = 3;
  static constexpr int kClickChannels = 2;

  static SegModel build(const ModelConfig& config, std::uint64_t seed);

  Tensor forward_g(Tape& tape, const Tensor& image, const Tensor& click_maps) const;
  Tensor forward_h(Tape& tape, const Tensor& feature) const;
  Tensor forward(Tape& tape, const Tensor& image, const Tensor& click_maps) const;

  const ModelConfig& config() const { return config_; }
  int channels() const { return config_.channels; }

  const std::vector<ConvLayer>& g_layers() const { return g_layers_; }
  const std::vector<ConvLayer>& h_layers() const { return h_layers_; }

  // Handles share storage with the model.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  void set_trainable(bool trainable);

  // Epochs of training applied so far; persisted with the weights.
  int trained_epochs() const { return trained_epochs_; }
  void add_trained_epochs(int epochs) { trained_epochs_ += epochs; }

 private:
  ModelConfig config_;
  std::vector<ConvLayer> g_layers_;
  std::vector<ConvLayer> h_layers_;
  int trained_epochs_ = 0;
};

void save_weights(const SegModel& model, const std::filesystem::path& path);
SegModel load_weights(const std::filesystem::path& path);
// Rejects the file when its stored config differs from `expected`, listing
// every differing field.
SegModel load_weights(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace cgam
