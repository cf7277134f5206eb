#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "cgam/tensor.hpp"

namespace cgam {

struct GradCheckOptions {
  double eps = 1e-5;
  // A coordinate is treated as sitting on a kink (e.g. a ReLU hinge) when its
  // one-sided difference quotients disagree by more than this relative amount.
  double kink_tolerance = 1e-3;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded_kinks = 0;
};

using ScalarFunction = std::function<Tensor(Tape&)>;

// Compares analytic gradients of `fn` with central differences over every
// coordinate of `inputs`. The relative error per coordinate is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult grad_check(const ScalarFunction& fn, std::span<Tensor> inputs,
                           GradCheckOptions options = {});

}  // namespace cgam
