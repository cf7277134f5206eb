#pragma once

#include <cstddef>

namespace cgam {

enum class ClickLabel : int { kNegative = -1, kPositive = 1 };

// One click: pixel (row, col), label, and the disk radius it stamps.
struct ClickRecord {
  int row = 0;
  int col = 0;
  ClickLabel label = ClickLabel::kPositive;
  int radius = 1;

  double sign() const { return static_cast<double>(static_cast<int>(label)); }
  bool positive() const { return label == ClickLabel::kPositive; }

  bool in_bounds(std::size_t height, std::size_t width) const {
    return row >= 0 && col >= 0 && static_cast<std::size_t>(row) < height &&
           static_cast<std::size_t>(col) < width;
  }

  bool operator==(const ClickRecord&) const = default;
};

}  // namespace cgam
