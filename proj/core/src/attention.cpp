#include "cgam/attention.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace cgam {
namespace {

void require_even(int channels) {
  if (channels < 2 || channels % 2 != 0) {
    throw std::invalid_argument("attention module channels must be even and >= 2, got " +
                                std::to_string(channels));
  }
}

Tensor he_normal(std::mt19937_64& rng, Shape shape, std::size_t fan_in) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

std::size_t cgam_param_count(int channels) {
  require_even(channels);
  const auto c = static_cast<std::size_t>(channels);
  const std::size_t half = c / 2;
  return 2 * half + c * half + half * c + half;
}

std::size_t CgamParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.numel();
  return n;
}

CgamParams CgamParams::clone() const {
  CgamParams out;
  out.channels = channels;
  out.click_weight = click_weight.clone();
  out.feature_weight = feature_weight.clone();
  out.inner_bias = inner_bias.clone();
  out.psi = psi.clone();
  return out;
}

void CgamParams::assign(const CgamParams& other) {
  auto dst = tensors();
  const auto src = other.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape()) {
      throw ShapeError("CgamParams::assign shape mismatch " + to_string(dst[i].shape()) +
                       " vs " + to_string(src[i].shape()));
    }
    std::copy(src[i].data().begin(), src[i].data().end(), dst[i].data().begin());
  }
}

bool CgamParams::identical(const CgamParams& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) return false;
    if (!std::equal(a[i].data().begin(), a[i].data().end(), b[i].data().begin())) return false;
  }
  return true;
}

CgamParams cgam_init(int channels, std::uint64_t seed) {
  require_even(channels);
  const auto c = static_cast<std::size_t>(channels);
  const std::size_t half = c / 2;
  std::mt19937_64 rng(seed);
  CgamParams p;
  p.channels = channels;
  p.click_weight = he_normal(rng, {half, 2, 1, 1}, 2);
  p.feature_weight = he_normal(rng, {half, c, 1, 1}, c);
  p.inner_bias = Tensor::zeros({half}, true);
  p.psi = Tensor::zeros({c, half, 1, 1}, true);
  return p;
}

Tensor downsample_clicks(const Tensor& click_maps, std::size_t height, std::size_t width) {
  if (click_maps.rank() != 4) {
    throw ShapeError("downsample_clicks expects [N,C,H,W], got " + to_string(click_maps.shape()));
  }
  const std::size_t planes = click_maps.dim(0) * click_maps.dim(1);
  const std::size_t in_h = click_maps.dim(2), in_w = click_maps.dim(3);
  if (height < 1 || width < 1 || height > in_h || width > in_w) {
    throw std::invalid_argument("downsample_clicks target " + std::to_string(height) + "x" +
                                std::to_string(width) + " must be within source " +
                                to_string(click_maps.shape()));
  }
  std::vector<double> out(planes * height * width);
  const auto src = click_maps.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* plane = src.data() + p * in_h * in_w;
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t y0 = y * in_h / height;
      const std::size_t y1 = ((y + 1) * in_h + height - 1) / height;
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t x0 = x * in_w / width;
        const std::size_t x1 = ((x + 1) * in_w + width - 1) / width;
        double acc = 0.0;
        for (std::size_t yy = y0; yy < y1; ++yy) {
          for (std::size_t xx = x0; xx < x1; ++xx) acc += plane[yy * in_w + xx];
        }
        out[(p * height + y) * width + x] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return Tensor::from({click_maps.dim(0), click_maps.dim(1), height, width}, std::move(out));
}

CgamOutput cgam_forward(Tape& tape, const CgamParams& params, const Tensor& feature,
                        const Tensor& clicks_downsampled) {
  if (feature.rank() != 4 || feature.dim(1) != static_cast<std::size_t>(params.channels)) {
    throw ShapeError("attention module expects " + std::to_string(params.channels) +
                     " feature channels, got " + to_string(feature.shape()));
  }
  if (clicks_downsampled.rank() != 4 || clicks_downsampled.dim(1) != 2 ||
      clicks_downsampled.dim(0) != feature.dim(0) ||
      clicks_downsampled.dim(2) != feature.dim(2) || clicks_downsampled.dim(3) != feature.dim(3)) {
    throw ShapeError("click maps " + to_string(clicks_downsampled.shape()) +
                     " are not at the feature resolution " + to_string(feature.shape()));
  }
  Tensor from_clicks = ops::conv2d(tape, clicks_downsampled, params.click_weight);
  Tensor from_feature = ops::conv2d(tape, feature, params.feature_weight, params.inner_bias);
  Tensor inner = ops::relu(tape, ops::add(tape, from_clicks, from_feature));
  Tensor attention = ops::add_scalar(tape, ops::conv2d(tape, inner, params.psi), 1.0);
  Tensor out = ops::mul(tape, feature, attention);
  return {out, attention};
}

Image attention_heatmap(const Tensor& attention, std::size_t height, std::size_t width) {
  if (attention.rank() != 4 || attention.dim(0) != 1) {
    throw ShapeError("attention_heatmap expects [1,c,h,w], got " + to_string(attention.shape()));
  }
  const std::size_t c = attention.dim(1), h = attention.dim(2), w = attention.dim(3);
  std::vector<double> heat(h * w, 0.0);
  const auto a = attention.data();
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < h * w; ++i) heat[i] += std::abs(a[k * h * w + i] - 1.0);
  }
  double peak = 0.0;
  for (auto& v : heat) {
    v /= static_cast<double>(c);
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (auto& v : heat) v /= peak;
  }
  Tape tape;
  Tensor up = ops::bilinear_resize(tape, Tensor::from({1, 1, h, w}, std::move(heat)), height, width);
  Image out = Image::zeros(1, height, width);
  const auto u = up.data();
  for (std::size_t i = 0; i < u.size(); ++i) out.pixels[i] = std::clamp(u[i], 0.0, 1.0);
  return out;
}

}  // namespace cgam
