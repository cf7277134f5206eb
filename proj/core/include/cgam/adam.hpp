#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cgam/tensor.hpp"

namespace cgam {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers, one pair per parameter, plus the step count
// used for bias correction.
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

AdamState make_adam_state(std::span<const Tensor> params, AdamConfig config);

// One bias-corrected Adam update. Gradients are read but not cleared.
// Throws if any parameter has no gradient or the state does not match.
void adam_step(std::span<Tensor> params, AdamState& state);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step() { adam_step(params_, state_); }
  void zero_grad();
  void set_learning_rate(double lr) { state_.config.learning_rate = lr; }

  const AdamState& state() const { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace cgam
