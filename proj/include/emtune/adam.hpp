#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "emtune/tensor.hpp"

namespace emtune {

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Zero moments shaped like `params`.
  static AdamState for_params(std::span<Matrix* const> params);
};

// One bias-corrected Adam step, in place. Rejects non-finite gradients
// before touching anything. A step whose gradients are all exactly zero
// leaves parameter values untouched (moments still decay, step advances).
void adam_update(std::span<Matrix* const> params, std::span<const Matrix> grads,
                 AdamState& state, double learning_rate);

}  // namespace emtune
