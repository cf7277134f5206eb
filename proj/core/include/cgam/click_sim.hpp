#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cgam/click.hpp"
#include "cgam/image.hpp"
#include "cgam/tensor.hpp"

namespace cgam {

// [1,2,H,W] binary maps: channel 0 holds positive disks, channel 1 negative
// disks. Each click stamps the closed Euclidean disk of its radius.
Tensor render_click_maps(std::span<const ClickRecord> clicks, std::size_t height,
                         std::size_t width);

// True for pixels inside the closed disk of `click`.
bool in_disk(const ClickRecord& click, long row, long col);

struct ErrorRegions {
  Mask false_positive;  // pred && !gt
  Mask false_negative;  // !pred && gt
};

ErrorRegions error_regions(const Mask& pred, const Mask& gt);

// Automatic click for the benchmark protocol: picks the larger of the two
// error regions (ties go to false negatives), clicks its interior point
// farthest from the region boundary (ties: smallest row, then column), and
// uses floor(distance) clamped to >= 1 as the radius. Returns nullopt when
// pred == gt.
std::optional<ClickRecord> generate_next_click(const Mask& pred, const Mask& gt);

// |pred & gt| / |pred | gt|, 1.0 when both are empty.
double iou(const Mask& pred, const Mask& gt);

struct ClickSamplingOptions {
  int max_total = 20;
  int max_per_class = 10;
  int margin = 2;       // clicks sit farther than this from the class boundary when possible
  int max_radius = 10;
};

// Random training clicks: per-class counts are uniform in [0, max_per_class]
// (so zero-click samples occur), positives land on gt pixels and negatives
// off them. Radii are uniform in [1, max_radius], capped so the disk stays
// inside its class.
std::vector<ClickRecord> sample_training_clicks(const Mask& gt, std::mt19937_64& rng,
                                                const ClickSamplingOptions& options = {});

}  // namespace cgam
