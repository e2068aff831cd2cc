#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bcgnn/num/matrix.hpp"
#include "bcgnn/num/tape.hpp"

namespace bcgnn::num {

/// Adam moments for a fixed, ordered list of parameters.
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// Applies one bias-corrected Adam update using each Parameter::grad.
/// Moments are lazily shaped on the first call; later calls with a different
/// parameter count or shape throw ShapeError.
void adam_step(std::span<Parameter* const> params, AdamState& state);

}  // namespace bcgnn::num
