#include "kasimp/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "kasimp/error.hpp"
#include "kasimp/random.hpp"

namespace kas {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> data) {
  auto node = std::make_shared<Node>();
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

// Wraps an operation result. History is kept only when some input needs it.
Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<std::shared_ptr<Node>> inputs,
                   std::function<void(Node&)> backward) {
  auto node = new_node(std::move(shape), std::move(data));
  node->op = op;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void require_rank2(const Tensor& t, const char* op) {
  require(t.defined(), ErrorKind::kContract, std::string(op) + ": undefined tensor");
  require(t.rank() == 2, ErrorKind::kDimension,
          std::string(op) + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::kDimension,
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

void require_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    require(!std::isnan(v), ErrorKind::kNumeric, std::string(op) + ": NaN input");
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

// --- Tensor -------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  for (auto d : shape) {
    require(d > 0, ErrorKind::kDimension, "tensor dimensions must be positive");
  }
  const auto n = shape_size(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    require(d > 0, ErrorKind::kDimension, "tensor dimensions must be positive");
  }
  require(shape_size(shape) == data.size(), ErrorKind::kDimension,
          "tensor data length " + std::to_string(data.size()) + " does not match shape " +
              shape_string(shape));
  auto node = new_node(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double limit, Rng& rng, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.mutable_data()) v = rng.uniform(-limit, limit);
  return t;
}

std::size_t Tensor::rows() const {
  return rank() == 1 ? 1 : node_->shape.at(0);
}

std::size_t Tensor::cols() const {
  return node_->shape.back();
}

double Tensor::item() const {
  require(size() == 1, ErrorKind::kDimension,
          "item() needs a single-element tensor, got " + shape_string(shape()));
  return node_->data[0];
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  require(size() == 1, ErrorKind::kDimension,
          "backward() needs a scalar, got " + shape_string(shape()));
  ComputationRecord::trace(*this).backward();
}

Tensor Tensor::detach() const {
  auto node = new_node(node_->shape, node_->data);
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  auto t = detach();
  t.set_requires_grad(requires_grad());
  return t;
}

// --- ComputationRecord ----------------------------------------------------------

ComputationRecord ComputationRecord::trace(const Tensor& root) {
  ComputationRecord record;
  record.root_ = root.node_ptr();
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    record.ops_.push_back(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  std::sort(record.ops_.begin(), record.ops_.end(),
            [](const Node* a, const Node* b) { return a->id < b->id; });
  return record;
}

void ComputationRecord::backward() const {
  if (ops_.empty()) return;
  // Intermediate gradients start from zero on every replay; leaves accumulate.
  for (Node* n : ops_) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  root_->ensure_grad();
  root_->grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// --- primitives ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, ErrorKind::kDimension,
          "matmul: inner dimensions disagree " + shape_string(a.shape()) + " x " +
              shape_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), "matmul", {a.node_ptr(), b.node_ptr()},
                     [m, k, n](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       const double* G = self.grad.data();
                       if (na.requires_grad) {
                         na.ensure_grad();
                         // dA = G * B^T
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             const double* brow = nb.data.data() + p * n;
                             const double* grow = G + i * n;
                             for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                             na.grad[i * k + p] += acc;
                           }
                         }
                       }
                       if (nb.requires_grad) {
                         nb.ensure_grad();
                         // dB = A^T * G
                         for (std::size_t i = 0; i < m; ++i) {
                           const double* grow = G + i * n;
                           for (std::size_t p = 0; p < k; ++p) {
                             const double av = na.data[i * k + p];
                             if (av == 0.0) continue;
                             double* dbrow = nb.grad.data() + p * n;
                             for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                           }
                         }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make_result({n, m}, std::move(out), "transpose", {a.node_ptr()}, [m, n](Node& self) {
    Node& na = *self.inputs[0];
    na.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), "add", {a.node_ptr(), b.node_ptr()},
                     [](Node& self) {
                       for (auto& in : self.inputs) {
                         if (!in->requires_grad) continue;
                         in->ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           in->grad[i] += self.grad[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), "sub", {a.node_ptr(), b.node_ptr()},
                     [](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       if (na.requires_grad) {
                         na.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           na.grad[i] += self.grad[i];
                       }
                       if (nb.requires_grad) {
                         nb.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           nb.grad[i] -= self.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), "mul", {a.node_ptr(), b.node_ptr()},
                     [](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       if (na.requires_grad) {
                         na.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           na.grad[i] += self.grad[i] * nb.data[i];
                       }
                       if (nb.requires_grad) {
                         nb.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           nb.grad[i] += self.grad[i] * na.data[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result(a.shape(), std::move(out), "scale", {a.node_ptr()}, [factor](Node& self) {
    Node& na = *self.inputs[0];
    na.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require(bias.size() == n && (bias.rank() == 1 || bias.rows() == 1), ErrorKind::kDimension,
          "add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
              shape_string(x.shape()));
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] + bias.data()[j];
  return make_result(x.shape(), std::move(out), "add_bias", {x.node_ptr(), bias.node_ptr()},
                     [m, n](Node& self) {
                       Node& nx = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       if (nx.requires_grad) {
                         nx.ensure_grad();
                         for (std::size_t i = 0; i < m * n; ++i) nx.grad[i] += self.grad[i];
                       }
                       if (nb.requires_grad) {
                         nb.ensure_grad();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) nb.grad[j] += self.grad[i * n + j];
                       }
                     });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return make_result(a.shape(), std::move(out), "relu", {a.node_ptr()}, [](Node& self) {
    Node& na = *self.inputs[0];
    na.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (na.data[i] > 0.0) na.grad[i] += self.grad[i];
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
  return make_result(a.shape(), std::move(out), "square", {a.node_ptr()}, [](Node& self) {
    Node& na = *self.inputs[0];
    na.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      na.grad[i] += 2.0 * na.data[i] * self.grad[i];
  });
}

Tensor softmax(const Tensor& x, int axis) {
  require(x.defined(), ErrorKind::kContract, "softmax: undefined tensor");
  const int rank = static_cast<int>(x.rank());
  if (axis < 0) axis += rank;
  require(axis >= 0 && axis < rank, ErrorKind::kDimension,
          "softmax: axis out of range for " + shape_string(x.shape()));
  require_finite(x.data(), "softmax");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = o * n * inner + q;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, in[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(in[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= total;
    }
  }
  return make_result(x.shape(), std::move(out), "softmax", {x.node_ptr()},
                     [outer, inner, n](Node& self) {
                       Node& nx = *self.inputs[0];
                       nx.ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t q = 0; q < inner; ++q) {
                           const std::size_t base = o * n * inner + q;
                           double dot = 0.0;
                           for (std::size_t k = 0; k < n; ++k)
                             dot += self.grad[base + k * inner] * self.data[base + k * inner];
                           for (std::size_t k = 0; k < n; ++k) {
                             const std::size_t idx = base + k * inner;
                             nx.grad[idx] += self.data[idx] * (self.grad[idx] - dot);
                           }
                         }
                       }
                     });
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed) {
  require_rank2(x, "masked_softmax");
  require(allowed.size() == x.size(), ErrorKind::kDimension,
          "masked_softmax: mask size does not match " + shape_string(x.shape()));
  require_finite(x.data(), "masked_softmax");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (allowed[i * n + j]) mx = std::max(mx, in[i * n + j]);
    require(mx != -std::numeric_limits<double>::infinity(), ErrorKind::kContract,
            "masked_softmax: every position of row " + std::to_string(i) + " is masked");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!allowed[i * n + j]) continue;
      const double e = std::exp(in[i * n + j] - mx);
      out[i * n + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return make_result(x.shape(), std::move(out), "masked_softmax", {x.node_ptr()},
                     [m, n](Node& self) {
                       Node& nx = *self.inputs[0];
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j)
                           dot += self.grad[i * n + j] * self.data[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           nx.grad[i * n + j] += self.data[i * n + j] * (self.grad[i * n + j] - dot);
                       }
                     });
}

Tensor log_softmax(const Tensor& x) {
  require(x.rank() == 1 || x.rank() == 2, ErrorKind::kDimension,
          "log_softmax: expected rank 1 or 2, got " + shape_string(x.shape()));
  require_finite(x.data(), "log_softmax");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[i * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(in[i * n + j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = in[i * n + j] - lse;
  }
  return make_result(x.shape(), std::move(out), "log_softmax", {x.node_ptr()},
                     [m, n](Node& self) {
                       Node& nx = *self.inputs[0];
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                         double total = 0.0;
                         for (std::size_t j = 0; j < n; ++j) total += self.grad[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           nx.grad[i * n + j] +=
                               self.grad[i * n + j] - std::exp(self.data[i * n + j]) * total;
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "embedding");
  require(!ids.empty(), ErrorKind::kContract, "embedding: empty id sequence");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < v, ErrorKind::kIndex,
            "embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v));
    std::copy_n(table.data().begin() + ids[i] * d, d, out.begin() + i * d);
  }
  std::vector<int> copy(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), "embedding", {table.node_ptr()},
                     [copy = std::move(copy), d](Node& self) {
                       Node& nt = *self.inputs[0];
                       nt.ensure_grad();
                       for (std::size_t i = 0; i < copy.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j)
                           nt.grad[copy[i] * d + j] += self.grad[i * d + j];
                     });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  require(p >= 0.0 && p < 1.0, ErrorKind::kContract, "dropout: probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return make_result(x.shape(), std::move(out), "dropout", {x.node_ptr()},
                     [mask = std::move(mask)](Node& self) {
                       Node& nx = *self.inputs[0];
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < mask.size(); ++i)
                         nx.grad[i] += self.grad[i] * mask[i];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), ErrorKind::kContract, "concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  for (const auto& p : parts) {
    require(p.rank() <= 2 && p.rows() == m, ErrorKind::kDimension,
            "concat_cols: row count mismatch " + shape_string(parts[0].shape()) + " vs " +
                shape_string(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
    inputs.push_back(p.node_ptr());
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[k].data().begin() + i * widths[k], widths[k],
                  out.begin() + i * total + offset);
    offset += widths[k];
  }
  return make_result({m, total}, std::move(out), "concat_cols", std::move(inputs),
                     [widths, m, total](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         Node& in = *self.inputs[k];
                         if (in.requires_grad) {
                           in.ensure_grad();
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               in.grad[i * widths[k] + j] += self.grad[i * total + off + j];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), ErrorKind::kContract, "concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::vector<double> out;
  for (const auto& p : parts) {
    require(p.rank() <= 2 && p.cols() == n, ErrorKind::kDimension,
            "concat_rows: column count mismatch " + shape_string(parts[0].shape()) + " vs " +
                shape_string(p.shape()));
    m += p.rows();
    out.insert(out.end(), p.data().begin(), p.data().end());
    inputs.push_back(p.node_ptr());
  }
  return make_result({m, n}, std::move(out), "concat_rows", std::move(inputs), [](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      if (in->requires_grad) {
        in->ensure_grad();
        for (std::size_t i = 0; i < in->data.size(); ++i) in->grad[i] += self.grad[off + i];
      }
      off += in->data.size();
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require(begin < end && end <= n, ErrorKind::kIndex,
          "slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") outside " + shape_string(x.shape()));
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.data().begin() + i * n + begin, w, out.begin() + i * w);
  return make_result({m, w}, std::move(out), "slice_cols", {x.node_ptr()},
                     [m, n, w, begin](Node& self) {
                       Node& nx = *self.inputs[0];
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < w; ++j)
                           nx.grad[i * n + begin + j] += self.grad[i * w + j];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require(begin < end && end <= m, ErrorKind::kIndex,
          "slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") outside " + shape_string(x.shape()));
  std::vector<double> out(x.data().begin() + begin * n, x.data().begin() + end * n);
  return make_result({end - begin, n}, std::move(out), "slice_rows", {x.node_ptr()},
                     [n, begin](Node& self) {
                       Node& nx = *self.inputs[0];
                       nx.ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         nx.grad[begin * n + i] += self.grad[i];
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  require(gain.size() == n && bias.size() == n, ErrorKind::kDimension,
          "layer_norm: gain/bias do not match " + shape_string(x.shape()));
  std::vector<double> out(m * n), xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x.data()[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = x.data()[i * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (x.data()[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = gain.data()[j] * xhat[i * n + j] + bias.data()[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm", {x.node_ptr(), gain.node_ptr(), bias.node_ptr()},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& nx = *self.inputs[0];
        Node& ng = *self.inputs[1];
        Node& nb = *self.inputs[2];
        if (ng.requires_grad) ng.ensure_grad();
        if (nb.requires_grad) nb.ensure_grad();
        if (nx.requires_grad) nx.ensure_grad();
        std::vector<double> dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double g = self.grad[i * n + j];
            if (ng.requires_grad) ng.grad[j] += g * xhat[i * n + j];
            if (nb.requires_grad) nb.grad[j] += g;
            dxhat[j] = g * ng.data[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[i * n + j];
          }
          if (!nx.requires_grad) continue;
          mean_d /= static_cast<double>(n);
          mean_dx /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j)
            nx.grad[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
        }
      });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, "sum", {x.node_ptr()}, [](Node& self) {
    Node& nx = *self.inputs[0];
    nx.ensure_grad();
    for (auto& g : nx.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor pick(const Tensor& x, std::size_t row, std::size_t col) {
  require(row < x.rows() && col < x.cols(), ErrorKind::kIndex,
          "pick: (" + std::to_string(row) + ", " + std::to_string(col) + ") outside " +
              shape_string(x.shape()));
  const std::size_t idx = row * x.cols() + col;
  return make_result({1}, {x.data()[idx]}, "pick", {x.node_ptr()}, [idx](Node& self) {
    Node& nx = *self.inputs[0];
    nx.ensure_grad();
    nx.grad[idx] += self.grad[0];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require(logits.rank() == 2 || logits.rank() == 1, ErrorKind::kDimension,
          "cross_entropy: expected [steps x V] logits, got " + shape_string(logits.shape()));
  const std::size_t m = logits.rows(), n = logits.cols();
  require(targets.size() == m, ErrorKind::kDimension,
          "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
              std::to_string(m) + " steps");
  require_finite(logits.data(), "cross_entropy");
  std::vector<double> probs(m * n);
  double loss = 0.0;
  const auto in = logits.data();
  for (std::size_t i = 0; i < m; ++i) {
    require(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < n, ErrorKind::kIndex,
            "cross_entropy: target id " + std::to_string(targets[i]) + " outside vocabulary of " +
                std::to_string(n));
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[i * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[i * n + j] = std::exp(in[i * n + j] - mx);
      total += probs[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= total;
    loss -= in[i * n + targets[i]] - mx - std::log(total);
  }
  loss /= static_cast<double>(m);
  std::vector<int> copy(targets.begin(), targets.end());
  return make_result({1}, {loss}, "cross_entropy", {logits.node_ptr()},
                     [m, n, probs = std::move(probs), copy = std::move(copy)](Node& self) {
                       Node& nl = *self.inputs[0];
                       nl.ensure_grad();
                       const double g = self.grad[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) nl.grad[i * n + j] += g * probs[i * n + j];
                         nl.grad[i * n + copy[i]] -= g;
                       }
                     });
}

// --- Rng state -----------------------------------------------------------------

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  require(!in.fail(), ErrorKind::kFormat, "corrupt random generator state");
}

}  // namespace kas
