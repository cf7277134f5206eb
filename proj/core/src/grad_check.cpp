#include "cgam/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cgam {
namespace {

double evaluate(const ScalarFunction& fn) {
  Tape tape;
  const double value = fn(tape).item();
  if (!std::isfinite(value)) throw std::domain_error("grad_check: function value is not finite");
  return value;
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& fn, std::span<Tensor> inputs,
                           GradCheckOptions options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = fn(tape);
    if (!std::isfinite(loss.item())) throw std::domain_error("grad_check: loss is not finite");
    tape.backward(loss);
    for (auto& t : inputs) {
      auto g = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                            : std::vector<double>(t.numel(), 0.0);
      for (double v : g) {
        if (!std::isfinite(v)) throw std::domain_error("grad_check: gradient is not finite");
      }
      analytic.push_back(std::move(g));
    }
  }

  GradCheckResult result;
  const double f0 = evaluate(fn);
  const double eps = options.eps;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double f_plus = evaluate(fn);
      values[i] = saved - eps;
      const double f_minus = evaluate(fn);
      values[i] = saved;

      const double right = (f_plus - f0) / eps;
      const double left = (f0 - f_minus) / eps;
      const double one_sided_scale = std::max({1.0, std::abs(right), std::abs(left)});
      if (std::abs(right - left) > options.kink_tolerance * one_sided_scale) {
        ++result.excluded_kinks;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
      ++result.checked;
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return result;
}

}  // namespace cgam
