#include "cgam/image.hpp"

#include <algorithm>
#include <numeric>

namespace cgam {

Image Image::zeros(std::size_t channels, std::size_t height, std::size_t width) {
  return Image{channels, height, width, std::vector<double>(channels * height * width, 0.0)};
}

Mask Mask::zeros(std::size_t height, std::size_t width) {
  return Mask{height, width, std::vector<std::uint8_t>(height * width, 0)};
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

double Mask::fraction() const {
  return pixels.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(pixels.size());
}

Tensor to_tensor(const Image& image) {
  return Tensor::from({1, image.channels, image.height, image.width}, image.pixels);
}

Tensor to_tensor(const Mask& mask) {
  std::vector<double> v(mask.pixels.begin(), mask.pixels.end());
  return Tensor::from({1, 1, mask.height, mask.width}, std::move(v));
}

Mask threshold_logits(const Tensor& logits) {
  if (logits.rank() != 4 || logits.dim(0) != 1 || logits.dim(1) != 1) {
    throw ShapeError("threshold_logits expects [1,1,H,W], got " + to_string(logits.shape()));
  }
  Mask m = Mask::zeros(logits.dim(2), logits.dim(3));
  const auto v = logits.data();
  for (std::size_t i = 0; i < v.size(); ++i) m.pixels[i] = v[i] > 0.0 ? 1 : 0;
  return m;
}

Image downscale(const Image& image, std::size_t max_side) {
  const std::size_t longest = std::max(image.height, image.width);
  if (longest <= max_side) return image;
  const std::size_t oh = std::max<std::size_t>(1, image.height * max_side / longest);
  const std::size_t ow = std::max<std::size_t>(1, image.width * max_side / longest);
  Image out = Image::zeros(image.channels, oh, ow);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      const std::size_t y0 = y * image.height / oh, y1 = (y + 1) * image.height / oh;
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t x0 = x * image.width / ow, x1 = (x + 1) * image.width / ow;
        double acc = 0.0;
        for (std::size_t yy = y0; yy < y1; ++yy) {
          for (std::size_t xx = x0; xx < x1; ++xx) acc += image.at(c, yy, xx);
        }
        out.at(c, y, x) = acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

}  // namespace cgam
