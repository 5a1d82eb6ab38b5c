#include "kasimp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "kasimp/error.hpp"

namespace kas {

GradCheckResult check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                double epsilon) {
  require(epsilon >= 1e-6 && epsilon <= 1e-3, ErrorKind::kCheck,
          "gradient check epsilon must lie in [1e-6, 1e-3]");
  for (auto& t : inputs) {
    require(t.requires_grad(), ErrorKind::kCheck, "gradient check input does not require grad");
    t.zero_grad();
  }
  const Tensor y = f();
  require(y.size() == 1, ErrorKind::kCheck, "gradient check needs a scalar-valued function");
  const double baseline = y.item();
  {
    NoGradGuard guard;
    const double again = f().item();
    require(again == baseline, ErrorKind::kCheck,
            "function is not deterministic (dropout or sampling enabled?)");
  }
  y.backward();

  GradCheckResult result;
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    std::vector<double> analytic(inputs[k].size(), 0.0);
    if (inputs[k].has_grad()) {
      std::copy(inputs[k].grad().begin(), inputs[k].grad().end(), analytic.begin());
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = f().item();
      values[i] = saved - epsilon;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic[i] - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = k;
        result.worst_offset = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace kas
