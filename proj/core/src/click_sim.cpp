#include "cgam/click_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cgam/distance_transform.hpp"

namespace cgam {
namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": mask shapes differ (" + std::to_string(a.height) +
                     "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

Mask invert(const Mask& m) {
  Mask out = m;
  for (auto& v : out.pixels) v = v ? 0 : 1;
  return out;
}

}  // namespace

bool in_disk(const ClickRecord& click, long row, long col) {
  const long dy = row - click.row;
  const long dx = col - click.col;
  return dy * dy + dx * dx <= static_cast<long>(click.radius) * click.radius;
}

Tensor render_click_maps(std::span<const ClickRecord> clicks, std::size_t height,
                         std::size_t width) {
  Tensor maps = Tensor::zeros({1, 2, height, width});
  auto data = maps.data();
  const long h = static_cast<long>(height), w = static_cast<long>(width);
  for (const auto& c : clicks) {
    if (!c.in_bounds(height, width)) {
      throw std::out_of_range("click (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                              ") outside " + std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t channel = c.positive() ? 0 : 1;
    double* plane = data.data() + channel * height * width;
    const long r = c.radius;
    for (long y = std::max(0L, c.row - r); y <= std::min(h - 1, c.row + r); ++y) {
      for (long x = std::max(0L, c.col - r); x <= std::min(w - 1, c.col + r); ++x) {
        if (in_disk(c, y, x)) plane[y * w + x] = 1.0;
      }
    }
  }
  return maps;
}

ErrorRegions error_regions(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "error_regions");
  ErrorRegions r{Mask::zeros(gt.height, gt.width), Mask::zeros(gt.height, gt.width)};
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    const bool p = pred.pixels[i] != 0, g = gt.pixels[i] != 0;
    r.false_positive.pixels[i] = p && !g;
    r.false_negative.pixels[i] = !p && g;
  }
  return r;
}

std::optional<ClickRecord> generate_next_click(const Mask& pred, const Mask& gt) {
  const ErrorRegions regions = error_regions(pred, gt);
  const std::size_t fp = regions.false_positive.count();
  const std::size_t fn = regions.false_negative.count();
  if (fp == 0 && fn == 0) return std::nullopt;

  const bool positive = fn >= fp;
  const Mask& region = positive ? regions.false_negative : regions.false_positive;
  const auto sq = squared_distance_transform(region);
  std::size_t best = 0;
  for (std::size_t i = 1; i < sq.size(); ++i) {
    if (sq[i] > sq[best]) best = i;  // strict: keeps the first in row-major order
  }
  ClickRecord click;
  click.row = static_cast<int>(best / gt.width);
  click.col = static_cast<int>(best % gt.width);
  click.label = positive ? ClickLabel::kPositive : ClickLabel::kNegative;
  click.radius = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(sq[best])))));
  return click;
}

double iou(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    const bool p = pred.pixels[i] != 0, g = gt.pixels[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<ClickRecord> sample_training_clicks(const Mask& gt, std::mt19937_64& rng,
                                                const ClickSamplingOptions& options) {
  std::vector<ClickRecord> clicks;
  if (options.max_total <= 0 || options.max_per_class < 0 || gt.pixels.empty()) return clicks;

  const std::size_t fg = gt.count();
  const std::size_t bg = gt.pixels.size() - fg;
  std::uniform_int_distribution<int> count_dist(0, options.max_per_class);
  int n_pos = count_dist(rng);
  int n_neg = count_dist(rng);
  if (fg == 0) n_pos = 0;
  if (bg == 0) n_neg = 0;
  n_pos = std::min(n_pos, options.max_total);
  n_neg = std::min(n_neg, options.max_total - n_pos);

  auto sample_class = [&](const Mask& region, int count, ClickLabel label) {
    if (count == 0) return;
    const auto dist = distance_transform(region);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] > options.margin) candidates.push_back(i);
    }
    if (candidates.empty()) {
      // A radius-1 disk only fits where the distance exceeds 1.
      for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > 1.0) candidates.push_back(i);
      }
    }
    if (candidates.empty()) return;
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    for (int k = 0; k < count; ++k) {
      const std::size_t idx = candidates[pick(rng)];
      const int fits = std::max(1, static_cast<int>(std::ceil(dist[idx])) - 1);
      std::uniform_int_distribution<int> radius(1, std::clamp(fits, 1, options.max_radius));
      ClickRecord c;
      c.row = static_cast<int>(idx / gt.width);
      c.col = static_cast<int>(idx % gt.width);
      c.label = label;
      c.radius = radius(rng);
      clicks.push_back(c);
    }
  };
  sample_class(gt, n_pos, ClickLabel::kPositive);
  sample_class(invert(gt), n_neg, ClickLabel::kNegative);
  return clicks;
}

}  // namespace cgam
