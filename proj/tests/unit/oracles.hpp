#pragma once

// Slow, obviously-correct reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "cgam/attention.hpp"
#include "cgam/click.hpp"
#include "cgam/image.hpp"
#include "cgam/tensor.hpp"

namespace oracle {

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline cgam::Tensor random_tensor(std::mt19937_64& rng, cgam::Shape shape, bool requires_grad = false,
                                  double lo = -1.0, double hi = 1.0) {
  const auto n = cgam::numel(shape);
  return cgam::Tensor::from(std::move(shape), random_values(rng, n, lo, hi), requires_grad);
}

// Direct six-loop convolution with zero padding.
inline std::vector<double> conv2d(const cgam::Tensor& input, const cgam::Tensor& weight,
                                  const cgam::Tensor& bias, int stride, int padding) {
  const long n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const long co = weight.dim(0), k = weight.dim(2);
  const long oh = (h + 2 * padding - k) / stride + 1, ow = (w + 2 * padding - k) / stride + 1;
  std::vector<double> out(n * co * oh * ow, 0.0);
  const auto x = input.data();
  const auto wt = weight.data();
  for (long b = 0; b < n; ++b)
    for (long o = 0; o < co; ++o)
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox) {
          double acc = bias.defined() ? bias.data()[o] : 0.0;
          for (long c = 0; c < ci; ++c)
            for (long ky = 0; ky < k; ++ky)
              for (long kx = 0; kx < k; ++kx) {
                const long iy = oy * stride + ky - padding, ix = ox * stride + kx - padding;
                if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
                acc += x[((b * ci + c) * h + iy) * w + ix] * wt[((o * ci + c) * k + ky) * k + kx];
              }
          out[((b * co + o) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

// Bilinear sample with half-pixel centres, one output pixel at a time.
inline std::vector<double> bilinear(const cgam::Tensor& input, std::size_t out_h, std::size_t out_w) {
  const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  std::vector<double> out(planes * out_h * out_w);
  const auto x = input.data();
  auto source = [](std::size_t o, std::size_t in, std::size_t out) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::max(s, 0.0);
  };
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double sy = source(oy, h, out_h), sx = source(ox, w, out_w);
        const std::size_t y0 = std::min(static_cast<std::size_t>(sy), h - 1);
        const std::size_t x0 = std::min(static_cast<std::size_t>(sx), w - 1);
        const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
        auto at = [&](std::size_t yy, std::size_t xx) { return x[(p * h + yy) * w + xx]; };
        out[(p * out_h + oy) * out_w + ox] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                                             fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
      }
  return out;
}

// Squared distance to the nearest outside pixel by exhaustive search; the
// ring just outside the image counts as outside.
inline std::vector<long> squared_edt(const cgam::Mask& m) {
  const long h = m.height, w = m.width;
  std::vector<long> out(h * w, 0);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (!m.at(y, x)) continue;
      long best = std::numeric_limits<long>::max();
      for (long yy = -1; yy <= h; ++yy)
        for (long xx = -1; xx <= w; ++xx) {
          const bool outside = yy < 0 || xx < 0 || yy >= h || xx >= w || !m.at(yy, xx);
          if (outside) best = std::min(best, (yy - y) * (yy - y) + (xx - x) * (xx - x));
        }
      out[y * w + x] = best;
    }
  return out;
}

inline double iou(const cgam::Mask& a, const cgam::Mask& b) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    inter += a.pixels[i] && b.pixels[i];
    uni += a.pixels[i] || b.pixels[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline bool in_disk(const cgam::ClickRecord& c, long y, long x) {
  const long dy = y - c.row, dx = x - c.col;
  return dy * dy + dx * dx <= static_cast<long>(c.radius) * c.radius;
}

// Attention module evaluated pixel by pixel with explicit sums.
struct CgamReference {
  std::vector<double> features;
  std::vector<double> attention;
};

inline CgamReference cgam(const cgam::CgamParams& p, const cgam::Tensor& m, const cgam::Tensor& cd) {
  const std::size_t n = m.dim(0), c = m.dim(1), h = m.dim(2), w = m.dim(3), half = c / 2;
  CgamReference r;
  r.features.resize(m.numel());
  r.attention.resize(m.numel());
  const auto md = m.data();
  const auto cdd = cd.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        std::vector<double> inner(half);
        for (std::size_t j = 0; j < half; ++j) {
          double v = p.inner_bias.data()[j];
          for (std::size_t k = 0; k < 2; ++k)
            v += p.click_weight.data()[j * 2 + k] * cdd[((b * 2 + k) * h + y) * w + x];
          for (std::size_t k = 0; k < c; ++k)
            v += p.feature_weight.data()[j * c + k] * md[((b * c + k) * h + y) * w + x];
          inner[j] = v > 0.0 ? v : 0.0;
        }
        for (std::size_t k = 0; k < c; ++k) {
          double a = 0.0;
          for (std::size_t j = 0; j < half; ++j) a += p.psi.data()[k * half + j] * inner[j];
          a += 1.0;
          const std::size_t i = ((b * c + k) * h + y) * w + x;
          r.attention[i] = a;
          r.features[i] = md[i] * a;
        }
      }
  return r;
}

inline cgam::Mask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double density) {
  std::bernoulli_distribution on(density);
  cgam::Mask m = cgam::Mask::zeros(h, w);
  for (auto& p : m.pixels) p = on(rng);
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace oracle
