#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgam/image.hpp"

namespace cgam {

class PngError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit PNG only. Gray and gray+alpha decode to one channel, RGB and RGBA to
// three; alpha is dropped. Values are scaled to [0, 1].
Image decode_png(const std::vector<std::uint8_t>& bytes);
Image read_png(const std::filesystem::path& path);

// Writes 8-bit gray (1 channel) or RGB (3 channels); values are clamped to
// [0, 1] and rounded.
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

Image mask_to_image(const Mask& mask);              // 0 / 1 gray
Mask binarize(const Image& gray, int threshold = 128);  // 8-bit value >= threshold

}  // namespace cgam
