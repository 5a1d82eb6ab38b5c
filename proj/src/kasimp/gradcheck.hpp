#pragma once

#include <functional>
#include <vector>

#include "kasimp/tensor.hpp"

namespace kas {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  // Location of the worst coordinate: input index and flat offset.
  std::size_t worst_input = 0;
  std::size_t worst_offset = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the analytic gradient of a scalar function against central
// differences (f(x+eps) - f(x-eps)) / 2eps on every coordinate of `inputs`.
// The relative error of a coordinate is |a - n| / max(|a|, |n|, 1e-8).
// `f` must rebuild its graph from the current values of `inputs` on each call;
// a function that returns different values for identical inputs is rejected.
GradCheckResult check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                double epsilon = 1e-5);

}  // namespace kas
