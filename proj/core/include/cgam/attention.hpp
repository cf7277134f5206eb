#pragma once

#include <cstdint>
#include <vector>

#include "cgam/image.hpp"
#include "cgam/tensor.hpp"

namespace cgam {

// Trainable weights of the click-guided attention module. All three
// transforms are 1x1 convolutions:
//   inner = ReLU(click_weight * C_d + feature_weight * m + inner_bias)   [c/2]
//   alpha = 1 + psi * inner                                              [c]
//   out   = m (.) alpha
// psi starts at zero, so alpha is exactly one until the first update.
struct CgamParams {
  int channels = 0;
  Tensor click_weight;    // [c/2, 2, 1, 1]
  Tensor feature_weight;  // [c/2, c, 1, 1]
  Tensor inner_bias;      // [c/2]
  Tensor psi;             // [c, c/2, 1, 1]

  std::vector<Tensor> tensors() const {
    return {click_weight, feature_weight, inner_bias, psi};
  }
  std::size_t parameter_count() const;
  CgamParams clone() const;
  // Overwrites values in place so existing handles (e.g. an optimizer's)
  // observe the restored state.
  void assign(const CgamParams& other);
  bool identical(const CgamParams& other) const;
};

CgamParams cgam_init(int channels, std::uint64_t seed);

// Closed form; depends on c only, never on the spatial size of the input.
std::size_t cgam_param_count(int channels);

// Area-averaging (adaptive average pooling) of [1,2,H,W] click maps down to
// [1,2,h,w]. Disks smaller than one cell survive as fractional coverage.
Tensor downsample_clicks(const Tensor& click_maps, std::size_t height, std::size_t width);

struct CgamOutput {
  Tensor features;   // m-hat, same shape as m
  Tensor attention;  // alpha, same shape as m
};

CgamOutput cgam_forward(Tape& tape, const CgamParams& params, const Tensor& feature,
                        const Tensor& clicks_downsampled);

// Per-pixel channel mean of |alpha - 1|, divided by its maximum (all zeros
// when alpha is identically one), bilinearly resized to height x width and
// clamped to [0, 1]. Returned as a one-channel image.
Image attention_heatmap(const Tensor& attention, std::size_t height, std::size_t width);

}  // namespace cgam
