#include "kasimp/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "kasimp/error.hpp"

namespace kas {

Adagrad::Adagrad(std::vector<Tensor> params, double learning_rate, double initial_accumulator)
    : params_(std::move(params)), lr_(learning_rate) {
  require(learning_rate > 0.0, ErrorKind::kConfig, "learning rate must be positive");
  require(initial_accumulator > 0.0, ErrorKind::kConfig, "initial accumulator must be positive");
  accum_.reserve(params_.size());
  for (const auto& p : params_) accum_.emplace_back(p.size(), initial_accumulator);
}

void Adagrad::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto data = p.mutable_data();
    const auto grad = p.grad();
    auto& acc = accum_[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      acc[k] += grad[k] * grad[k];
      data[k] -= lr_ * grad[k] / std::sqrt(acc[k]);
    }
  }
}

void Adagrad::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adagrad::set_accumulators(std::vector<std::vector<double>> accum) {
  require(accum.size() == accum_.size(), ErrorKind::kFormat,
          "optimizer state has the wrong number of tensors");
  for (std::size_t i = 0; i < accum.size(); ++i) {
    require(accum[i].size() == accum_[i].size(), ErrorKind::kFormat,
            "optimizer state has the wrong tensor size");
  }
  accum_ = std::move(accum);
}

double global_grad_norm(std::span<const Tensor> params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) total += g * g;
  }
  return std::sqrt(total);
}

double clip_global_norm(std::span<Tensor> params, double threshold) {
  const double norm = global_grad_norm(params);
  require(std::isfinite(norm), ErrorKind::kNumeric, "non-finite gradient norm");
  if (norm > threshold) {
    const double factor = threshold / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

double clip_values(std::span<Tensor> params, double threshold) {
  const double norm = global_grad_norm(params);
  require(std::isfinite(norm), ErrorKind::kNumeric, "non-finite gradient norm");
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.mutable_grad()) g = std::clamp(g, -threshold, threshold);
  }
  return norm;
}

}  // namespace kas
