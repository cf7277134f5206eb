#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgam {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major float64 tensor.
//
// A Tensor is a reference-counted handle: copies share storage, the same way
// parameters are shared between a model and its optimizer. Use clone() for an
// independent copy and detach() for a copy that is cut from the graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Accumulates `delta` into the gradient buffer. No-op when the tensor does
  // not require grad.
  void accumulate_grad(std::span<const double> delta) const;
  std::span<double> grad_buffer() const;  // allocates zeros on first use

  Tensor clone() const;
  Tensor detach() const;
  bool shares_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  detail::TensorImpl& impl() const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of differentiable operations.
//
// Operations only record when at least one input requires grad, so forward
// passes through frozen weights leave the tape empty. backward() replays the
// records in reverse, visiting each one exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  void record(Tensor output, BackwardFn backward);
  void backward(const Tensor& loss);
  void clear();

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

 private:
  struct Node {
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias, int stride = 1, int padding = 0);
inline Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight,
                     int stride = 1, int padding = 0) {
  return conv2d(tape, input, weight, Tensor{}, stride, padding);
}

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor square(Tape& tape, const Tensor& x);

// Binary ops require identical shapes, or a single-element right operand.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add_scalar(Tape& tape, const Tensor& x, double value);
Tensor scale(Tape& tape, const Tensor& x, double factor);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

// Picks flat indices into a rank-1 tensor of length indices.size().
Tensor gather(Tape& tape, const Tensor& x, std::span<const std::size_t> indices);

// Concatenates along axis 1 of two [N,C,H,W] tensors.
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);

// Bilinear resampling with half-pixel centers (align_corners = false).
Tensor bilinear_resize(Tape& tape, const Tensor& input, std::size_t out_h,
                       std::size_t out_w);

}  // namespace ops

}  // namespace cgam
