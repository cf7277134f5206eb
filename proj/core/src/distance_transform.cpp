#include "cgam/distance_transform.hpp"

#include <cmath>
#include <limits>

namespace cgam {
namespace {

// 1-D squared distance transform of a sampled function f over [0, n) via the
// lower envelope of parabolas rooted at each sample.
void envelope_1d(const std::vector<long>& f, std::vector<long>& d, std::vector<int>& v,
                 std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto intersect = [&f](int q, int p) {
    return (static_cast<double>(f[q] + static_cast<long>(q) * q) -
            static_cast<double>(f[p] + static_cast<long>(p) * p)) /
           (2.0 * (q - p));
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const long dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<long> squared_distance_transform(const Mask& mask) {
  const auto h = static_cast<long>(mask.height);
  const auto w = static_cast<long>(mask.width);
  std::vector<long> out(static_cast<std::size_t>(h * w), 0);
  if (h == 0 || w == 0) return out;

  // Column pass: vertical distance to nearest outside pixel, counting the
  // virtual rows -1 and h as outside.
  std::vector<long> col(static_cast<std::size_t>(h * w));
  for (long x = 0; x < w; ++x) {
    long last = -1;
    for (long y = 0; y < h; ++y) {
      if (!mask.at(y, x)) last = y;
      col[y * w + x] = y - last;
    }
    last = h;
    for (long y = h - 1; y >= 0; --y) {
      if (!mask.at(y, x)) last = y;
      col[y * w + x] = std::min(col[y * w + x], last - y);
    }
  }

  // Row pass over the padded row [-1, w]; the two virtual end columns are
  // outside (f = 0).
  const long n = w + 2;
  std::vector<long> f(n), d(n);
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  for (long y = 0; y < h; ++y) {
    f[0] = 0;
    f[n - 1] = 0;
    for (long x = 0; x < w; ++x) {
      const long c = col[y * w + x];
      f[x + 1] = c * c;
    }
    envelope_1d(f, d, v, z);
    for (long x = 0; x < w; ++x) out[y * w + x] = mask.at(y, x) ? d[x + 1] : 0;
  }
  return out;
}

std::vector<double> distance_transform(const Mask& mask) {
  const auto sq = squared_distance_transform(mask);
  std::vector<double> out(sq.size());
  for (std::size_t i = 0; i < sq.size(); ++i) out[i] = std::sqrt(static_cast<double>(sq[i]));
  return out;
}

}  // namespace cgam
