#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kasimp/tensor.hpp"

namespace kas {

// Per-coordinate adaptive steps: accum += g^2; p -= lr * g / sqrt(accum).
class Adagrad {
 public:
  Adagrad(std::vector<Tensor> params, double learning_rate, double initial_accumulator);

  // Applies one update from the gradients currently held by the parameters.
  // Parameters without a gradient are left alone.
  void step();
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& accumulators() const { return accum_; }
  void set_accumulators(std::vector<std::vector<double>> accum);

  double learning_rate() const { return lr_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> accum_;
  double lr_;
};

// Rescales every gradient by threshold / norm when the joint L2 norm exceeds
// the threshold. Returns the norm before clipping.
double clip_global_norm(std::span<Tensor> params, double threshold);

// Clamps each gradient coordinate to [-threshold, threshold]. Returns the
// norm before clipping.
double clip_values(std::span<Tensor> params, double threshold);

double global_grad_norm(std::span<const Tensor> params);

}  // namespace kas
