#include <algorithm>
#include <cmath>

#include "cgam/tensor.hpp"

namespace cgam::ops {
namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> tensors) {
  for (const Tensor* t : tensors) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) +
                     ", got " + to_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_c, k_h, k_w;
  std::size_t out_h, out_w;
  std::size_t stride, pad;
};

// Valid output column range [lo, hi) for kernel column `kx` so that the
// sampled input column stays inside [0, in_w).
inline void column_range(const ConvGeometry& g, std::size_t kx, std::size_t& lo,
                         std::size_t& hi) {
  const long s = static_cast<long>(g.stride);
  const long offset = static_cast<long>(kx) - static_cast<long>(g.pad);
  long first = offset >= 0 ? 0 : (-offset + s - 1) / s;
  long last = (static_cast<long>(g.in_w) - 1 - offset);  // ox * s <= last
  long end = last < 0 ? 0 : last / s + 1;
  end = std::min<long>(end, static_cast<long>(g.out_w));
  lo = static_cast<std::size_t>(std::min(first, end));
  hi = static_cast<std::size_t>(end);
}

void conv_forward(const ConvGeometry& g, const double* in, const double* w,
                  const double* bias, double* out) {
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      double* o = out + (n * g.out_c + oc) * out_plane;
      std::fill(o, o + out_plane, bias ? bias[oc] : 0.0);
      for (std::size_t ic = 0; ic < g.in_c; ++ic) {
        const double* x = in + (n * g.in_c + ic) * in_plane;
        const double* wk = w + (oc * g.in_c + ic) * g.k_h * g.k_w;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          for (std::size_t kx = 0; kx < g.k_w; ++kx) {
            const double wv = wk[ky * g.k_w + kx];
            if (wv == 0.0) continue;
            std::size_t lo, hi;
            column_range(g, kx, lo, hi);
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              double* orow = o + oy * g.out_w;
              const double* xrow = x + static_cast<std::size_t>(iy) * g.in_w;
              const long shift = static_cast<long>(kx) - static_cast<long>(g.pad);
              if (g.stride == 1) {
                const double* xs = xrow + shift;
                for (std::size_t ox = lo; ox < hi; ++ox) orow[ox] += wv * xs[ox];
              } else {
                for (std::size_t ox = lo; ox < hi; ++ox) {
                  orow[ox] += wv * xrow[static_cast<long>(ox * g.stride) + shift];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(const ConvGeometry& g, const double* gout, const double* w,
                         double* gin) {
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      const double* go = gout + (n * g.out_c + oc) * out_plane;
      for (std::size_t ic = 0; ic < g.in_c; ++ic) {
        double* gx = gin + (n * g.in_c + ic) * in_plane;
        const double* wk = w + (oc * g.in_c + ic) * g.k_h * g.k_w;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          for (std::size_t kx = 0; kx < g.k_w; ++kx) {
            const double wv = wk[ky * g.k_w + kx];
            if (wv == 0.0) continue;
            std::size_t lo, hi;
            column_range(g, kx, lo, hi);
            const long shift = static_cast<long>(kx) - static_cast<long>(g.pad);
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              const double* grow = go + oy * g.out_w;
              double* xrow = gx + static_cast<std::size_t>(iy) * g.in_w;
              if (g.stride == 1) {
                double* xs = xrow + shift;
                for (std::size_t ox = lo; ox < hi; ++ox) xs[ox] += wv * grow[ox];
              } else {
                for (std::size_t ox = lo; ox < hi; ++ox) {
                  xrow[static_cast<long>(ox * g.stride) + shift] += wv * grow[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const ConvGeometry& g, const double* gout, const double* in,
                          double* gw) {
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      const double* go = gout + (n * g.out_c + oc) * out_plane;
      for (std::size_t ic = 0; ic < g.in_c; ++ic) {
        const double* x = in + (n * g.in_c + ic) * in_plane;
        double* gk = gw + (oc * g.in_c + ic) * g.k_h * g.k_w;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          for (std::size_t kx = 0; kx < g.k_w; ++kx) {
            std::size_t lo, hi;
            column_range(g, kx, lo, hi);
            const long shift = static_cast<long>(kx) - static_cast<long>(g.pad);
            double acc = 0.0;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              const double* grow = go + oy * g.out_w;
              const double* xrow = x + static_cast<std::size_t>(iy) * g.in_w;
              if (g.stride == 1) {
                const double* xs = xrow + shift;
                for (std::size_t ox = lo; ox < hi; ++ox) acc += grow[ox] * xs[ox];
              } else {
                for (std::size_t ox = lo; ox < hi; ++ox) {
                  acc += grow[ox] * xrow[static_cast<long>(ox * g.stride) + shift];
                }
              }
            }
            gk[ky * g.k_w + kx] += acc;
          }
        }
      }
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(Tape& tape, const Tensor& a, const Tensor& b, BinaryKind kind) {
  const bool scalar_rhs = b.numel() == 1 && a.shape() != b.shape();
  if (!scalar_rhs && a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t n = av.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = scalar_rhs ? bv[0] : bv[i];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = av[i] + y; break;
      case BinaryKind::kSub: out[i] = av[i] - y; break;
      case BinaryKind::kMul: out[i] = av[i] * y; break;
    }
  }
  const bool rg = any_requires_grad({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), rg);
  if (rg) {
    tape.record(result, [a, b, kind, scalar_rhs](std::span<const double> go) mutable {
      const std::size_t n = go.size();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        const auto bv = b.data();
        for (std::size_t i = 0; i < n; ++i) {
          ga[i] += kind == BinaryKind::kMul ? go[i] * (scalar_rhs ? bv[0] : bv[i]) : go[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        const auto av = a.data();
        const double sign = kind == BinaryKind::kSub ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = kind == BinaryKind::kMul ? go[i] * av[i] : sign * go[i];
          gb[scalar_rhs ? 0 : i] += d;
        }
      }
    });
  }
  return result;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d padding must be >= 0");
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d channel mismatch: input " + to_string(input.shape()) +
                     " vs weight " + to_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ShapeError("conv2d bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_c = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_c = weight.dim(0);
  g.k_h = weight.dim(2);
  g.k_w = weight.dim(3);
  g.stride = static_cast<std::size_t>(stride);
  g.pad = static_cast<std::size_t>(padding);
  if (g.in_h + 2 * g.pad < g.k_h || g.in_w + 2 * g.pad < g.k_w) {
    throw ShapeError("conv2d kernel " + to_string(weight.shape()) +
                     " does not fit padded input " + to_string(input.shape()) +
                     " with padding " + std::to_string(padding));
  }
  g.out_h = (g.in_h + 2 * g.pad - g.k_h) / g.stride + 1;
  g.out_w = (g.in_w + 2 * g.pad - g.k_w) / g.stride + 1;
  const Shape out_shape{g.batch, g.out_c, g.out_h, g.out_w};

  // A pointwise convolution is the same computation over one long row.
  ConvGeometry eff = g;
  if (g.k_h == 1 && g.k_w == 1 && g.stride == 1 && g.pad == 0) {
    eff.in_w = eff.out_w = g.in_h * g.in_w;
    eff.in_h = eff.out_h = 1;
  }

  std::vector<double> out(numel(out_shape));
  conv_forward(eff, input.data().data(), weight.data().data(),
               bias.defined() ? bias.data().data() : nullptr, out.data());

  const bool rg = any_requires_grad({&input, &weight, &bias});
  Tensor result = make_output(out_shape, std::move(out), rg);
  if (rg) {
    tape.record(result, [input, weight, bias, eff](std::span<const double> go) mutable {
      if (input.requires_grad()) {
        conv_backward_input(eff, go.data(), weight.data().data(),
                            input.grad_buffer().data());
      }
      if (weight.requires_grad()) {
        conv_backward_weight(eff, go.data(), input.data().data(),
                             weight.grad_buffer().data());
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        const std::size_t plane = eff.out_h * eff.out_w;
        for (std::size_t n = 0; n < eff.batch; ++n) {
          for (std::size_t oc = 0; oc < eff.out_c; ++oc) {
            const double* p = go.data() + (n * eff.out_c + oc) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            gb[oc] += acc;
          }
        }
      }
    });
  }
  return result;
}

Tensor relu(Tape& tape, const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  Tensor result = make_output(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x](std::span<const double> go) mutable {
      auto gx = x.grad_buffer();
      const auto xv = x.data();
      // Subgradient at exactly zero is zero.
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (xv[i] > 0.0) gx[i] += go[i];
      }
    });
  }
  return result;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  Tensor result = make_output(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x, y = result](std::span<const double> go) mutable {
      auto gx = x.grad_buffer();
      const auto yv = y.data();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * yv[i] * (1.0 - yv[i]);
    });
  }
  return result;
}

Tensor square(Tape& tape, const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * xv[i];
  Tensor result = make_output(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x](std::span<const double> go) mutable {
      auto gx = x.grad_buffer();
      const auto xv = x.data();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += 2.0 * xv[i] * go[i];
    });
  }
  return result;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, BinaryKind::kAdd);
}
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, BinaryKind::kSub);
}
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, BinaryKind::kMul);
}

Tensor add_scalar(Tape& tape, const Tensor& x, double value) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + value;
  Tensor result = make_output(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x](std::span<const double> go) mutable { x.accumulate_grad(go); });
  }
  return result;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  Tensor result = make_output(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x, factor](std::span<const double> go) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += factor * go[i];
    });
  }
  return result;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor result = make_output({1}, {acc}, x.requires_grad());
  if (x.requires_grad()) {
    tape.record(result, [x](std::span<const double> go) mutable {
      auto gx = x.grad_buffer();
      for (auto& g : gx) g += go[0];
    });
  }
  return result;
}

Tensor mean(Tape& tape, const Tensor& x) {
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.numel()));
}

Tensor gather(Tape& tape, const Tensor& x, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("gather needs at least one index");
  const auto xv = x.data();
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.size()) {
      throw ShapeError("gather index " + std::to_string(indices[i]) +
                       " out of range for shape " + to_string(x.shape()));
    }
    out[i] = xv[indices[i]];
  }
  Tensor result = make_output({indices.size()}, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    tape.record(result, [x, idx = std::move(idx)](std::span<const double> go) mutable {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += go[i];
    });
  }
  return result;
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels lhs");
  require_rank(b, 4, "concat_channels rhs");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels mismatch: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = a.dim(2) * a.dim(3);
  std::vector<double> out;
  out.reserve(n * (ca + cb) * plane);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    out.insert(out.end(), av.begin() + i * ca * plane, av.begin() + (i + 1) * ca * plane);
    out.insert(out.end(), bv.begin() + i * cb * plane, bv.begin() + (i + 1) * cb * plane);
  }
  const bool rg = any_requires_grad({&a, &b});
  Tensor result = make_output({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), rg);
  if (rg) {
    tape.record(result, [a, b, n, ca, cb, plane](std::span<const double> go) mutable {
      for (std::size_t i = 0; i < n; ++i) {
        const double* base = go.data() + i * (ca + cb) * plane;
        if (a.requires_grad()) {
          auto ga = a.grad_buffer();
          for (std::size_t k = 0; k < ca * plane; ++k) ga[i * ca * plane + k] += base[k];
        }
        if (b.requires_grad()) {
          auto gb = b.grad_buffer();
          for (std::size_t k = 0; k < cb * plane; ++k) {
            gb[i * cb * plane + k] += base[ca * plane + k];
          }
        }
      }
    });
  }
  return result;
}

namespace {

struct Interp {
  std::size_t lo, hi;
  double w_hi;
};

std::vector<Interp> interp_table(std::size_t in, std::size_t out) {
  std::vector<Interp> table(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = ratio * (static_cast<double>(d) + 0.5) - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = lo < in - 1 ? lo + 1 : lo;
    table[d] = {lo, hi, src - static_cast<double>(lo)};
  }
  return table;
}

}  // namespace

Tensor bilinear_resize(Tape& tape, const Tensor& input, std::size_t out_h,
                       std::size_t out_w) {
  require_rank(input, 4, "bilinear_resize input");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize target must be >= 1");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t in_h = input.dim(2), in_w = input.dim(3);
  const auto ty = interp_table(in_h, out_h);
  const auto tx = interp_table(in_w, out_w);
  std::vector<double> out(planes * out_h * out_w);
  const auto xv = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * in_h * in_w;
    double* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& iy = ty[oy];
      const double* r0 = src + iy.lo * in_w;
      const double* r1 = src + iy.hi * in_w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& ix = tx[ox];
        const double top = (1.0 - ix.w_hi) * r0[ix.lo] + ix.w_hi * r0[ix.hi];
        const double bot = (1.0 - ix.w_hi) * r1[ix.lo] + ix.w_hi * r1[ix.hi];
        dst[oy * out_w + ox] = (1.0 - iy.w_hi) * top + iy.w_hi * bot;
      }
    }
  }
  Tensor result = make_output({input.dim(0), input.dim(1), out_h, out_w}, std::move(out),
                              input.requires_grad());
  if (input.requires_grad()) {
    tape.record(result, [input, ty, tx, planes, in_h, in_w, out_h,
                         out_w](std::span<const double> go) mutable {
      auto gx = input.grad_buffer();
      for (std::size_t p = 0; p < planes; ++p) {
        double* dst = gx.data() + p * in_h * in_w;
        const double* g = go.data() + p * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto& iy = ty[oy];
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto& ix = tx[ox];
            const double v = g[oy * out_w + ox];
            dst[iy.lo * in_w + ix.lo] += v * (1.0 - iy.w_hi) * (1.0 - ix.w_hi);
            dst[iy.lo * in_w + ix.hi] += v * (1.0 - iy.w_hi) * ix.w_hi;
            dst[iy.hi * in_w + ix.lo] += v * iy.w_hi * (1.0 - ix.w_hi);
            dst[iy.hi * in_w + ix.hi] += v * iy.w_hi * ix.w_hi;
          }
        }
      }
    });
  }
  return result;
}

}  // namespace cgam::ops
