#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cgam/tensor.hpp"

namespace cgam {

// Planar (channel-major) image with values in [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  static Image zeros(std::size_t channels, std::size_t height, std::size_t width);

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }

  bool operator==(const Image&) const = default;
};

// Binary H x W mask stored as 0/1 bytes.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  static Mask zeros(std::size_t height, std::size_t width);

  bool at(std::size_t y, std::size_t x) const { return pixels[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v) { pixels[y * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  double fraction() const;

  bool operator==(const Mask&) const = default;
};

Tensor to_tensor(const Image& image);  // [1,C,H,W]
Tensor to_tensor(const Mask& mask);    // [1,1,H,W] of 0/1

// Foreground where logit > 0. Accepts [1,1,H,W].
Mask threshold_logits(const Tensor& logits);

// Area-averaging downscale keeping the aspect ratio, longest side <= max_side.
Image downscale(const Image& image, std::size_t max_side);

}  // namespace cgam
