#pragma once

// Dense float64 tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle to a node of the computation graph. Operations
// create new nodes that remember their inputs and a backward closure; calling
// backward() on a scalar replays the reachable nodes in reverse creation order.
// Creation order is a valid topological order because every input exists before
// the operation that consumes it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kas {

class Rng;

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, double limit, Rng& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  // Rank-2 conveniences; rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  // Seeds d(self)/d(self) = 1 and accumulates gradients into every reachable
  // tensor that requires them. Only valid on single-element tensors.
  void backward() const;

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// The ordered list of operations reachable from a root, inputs first.
class ComputationRecord {
 public:
  static ComputationRecord trace(const Tensor& root);

  const std::vector<Node*>& operations() const { return ops_; }
  // Replays the record backwards. The root gradient is seeded with one.
  void backward() const;

 private:
  std::shared_ptr<Node> root_;
  std::vector<Node*> ops_;
};

// Disables graph construction on this thread while alive. Results computed
// under the guard carry no history and never require gradients.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// --- primitives ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[m x n] + bias[n], broadcasting only along the leading axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

// Softmax along one axis with max subtraction.
Tensor softmax(const Tensor& x, int axis = -1);
// Row softmax of a rank-2 tensor where allowed[r * cols + c] == 0 excludes a
// position. Excluded positions receive exactly zero probability.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed);
Tensor log_softmax(const Tensor& x);

// Rows of table selected by ids.
Tensor embedding(const Tensor& table, std::span<const int> ids);
// Bernoulli keep-mask scaled by 1/(1-p) when training; identity otherwise.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Scalar element x[row, col].
Tensor pick(const Tensor& x, std::size_t row, std::size_t col);

// Mean over rows of -log softmax(logits)[row, target[row]].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

}  // namespace kas
