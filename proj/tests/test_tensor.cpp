#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "kasimp/error.hpp"
#include "kasimp/gradcheck.hpp"
#include "kasimp/random.hpp"
#include "kasimp/tensor.hpp"

using namespace kas;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true) {
  return Tensor::uniform(std::move(shape), 1.0, rng, grad);
}

// Hand-rolled softmax used as the reference.
std::vector<double> reference_softmax(const std::vector<double>& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  std::vector<double> e;
  double z = 0.0;
  for (double v : x) {
    e.push_back(std::exp(v - m));
    z += e.back();
  }
  for (double& v : e) v /= z;
  return e;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kCheck;
}

}  // namespace

TEST_CASE("matmul hand cases") {
  const auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const auto b = Tensor::from({2, 1}, {1, 1});
  const auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.at(0) == 3);
  CHECK(c.at(1) == 7);

  const auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const auto m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto em = matmul(eye, m);
  CHECK(std::vector<double>(em.data().begin(), em.data().end()) ==
        std::vector<double>{1, 2, 3, 4, 5, 6});

  Rng rng(3);
  const auto z = matmul(Tensor::zeros({2, 3}), random_tensor({3, 4}, rng, false));
  CHECK(z.shape() == Shape{2, 4});
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  const auto u = softmax(Tensor::from({1, 3}, {0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const auto big = softmax(Tensor::from({1, 2}, {1000, 0}));
  CHECK(std::isfinite(big.at(0)));
  CHECK(big.at(0) == doctest::Approx(1.0));
  CHECK(big.at(1) < 1e-300);

  const auto l = softmax(Tensor::from({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(std::abs(l.at(0) - 1.0 / 6) < 1e-15);
  CHECK(std::abs(l.at(1) - 2.0 / 6) < 1e-15);
  CHECK(std::abs(l.at(2) - 3.0 / 6) < 1e-15);
}

TEST_CASE("softmax rows sum to one and match reference") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(4), cols = 1 + rng.below(7);
    auto x = Tensor::uniform({rows, cols}, 30.0, rng);
    const auto y = softmax(x);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> row(x.data().begin() + r * cols, x.data().begin() + (r + 1) * cols);
      const auto ref = reference_softmax(row);
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        total += y.at(r, c);
        CHECK(std::abs(y.at(r, c) - ref[c]) < 1e-12);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax along axis 0") {
  const auto x = Tensor::from({2, 2}, {0, 1, 0, 1});
  const auto y = softmax(x, 0);
  for (double v : y.data()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("NaN input is a numeric error") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(kind_of([&] { softmax(Tensor::from({1, 2}, {nan, 0})); }) == ErrorKind::kNumeric);
  CHECK(kind_of([&] {
          const int t[] = {0};
          cross_entropy(Tensor::from({1, 2}, {nan, 0}), t);
        }) == ErrorKind::kNumeric);
}

TEST_CASE("masked softmax zeroes excluded positions") {
  const auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const std::vector<std::uint8_t> allowed = {1, 0, 1, 0, 0, 1};
  const auto y = masked_softmax(x, allowed);
  CHECK(y.at(0, 1) == 0.0);
  CHECK(y.at(1, 0) == 0.0);
  CHECK(y.at(1, 1) == 0.0);
  CHECK(y.at(1, 2) == 1.0);
  CHECK(y.at(0, 0) + y.at(0, 2) == doctest::Approx(1.0));
  const std::vector<std::uint8_t> none = {0, 0, 0, 1, 1, 1};
  CHECK(kind_of([&] { masked_softmax(x, none); }) == ErrorKind::kContract);
}

TEST_CASE("cross entropy examples") {
  const int targets[] = {0, 3};
  const auto uniform = cross_entropy(Tensor::zeros({2, 4}), targets);
  CHECK(uniform.item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  double previous = 1e9;
  for (double margin : {1.0, 5.0, 20.0, 50.0}) {
    const auto l = cross_entropy(Tensor::from({1, 3}, {margin, 0, 0}), std::vector<int>{0});
    CHECK(l.item() < previous);
    previous = l.item();
  }
  CHECK(previous < 1e-20);

  // Random 3x5 case against the scalar formula.
  Rng rng(5);
  const auto logits = Tensor::uniform({3, 5}, 2.0, rng);
  const std::vector<int> t = {4, 0, 2};
  double expected = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits.at(r, c));
    expected += -(logits.at(r, t[r]) - std::log(z));
  }
  expected /= 3.0;
  CHECK(std::abs(cross_entropy(logits, t).item() - expected) < 1e-14);

  CHECK(kind_of([&] { cross_entropy(logits, std::vector<int>{5, 0, 0}); }) == ErrorKind::kIndex);
}

TEST_CASE("gradient check examples") {
  Rng rng(7);
  auto x = random_tensor({3, 4}, rng);
  const auto linear = check_gradients([&] { return sum(x); }, {x});
  CHECK(linear.max_relative_error < 1e-8);
  for (double g : x.grad()) CHECK(g == 1.0);

  const auto quad = check_gradients([&] { return sum(square(x)); }, {x});
  CHECK(quad.max_relative_error < 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2 * x.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("gradient check rejects non-deterministic functions and bad epsilon") {
  Rng rng(8);
  auto x = random_tensor({2}, rng);
  Rng noise(1);
  CHECK(kind_of([&] {
          check_gradients([&] { return scale(sum(x), noise.uniform()); }, {x});
        }) == ErrorKind::kCheck);
  CHECK(kind_of([&] { check_gradients([&] { return sum(x); }, {x}, 1.0); }) ==
        ErrorKind::kCheck);
}

TEST_CASE("every primitive matches finite differences") {
  Rng rng(21);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto c = random_tensor({3, 4}, rng);
  auto bias = random_tensor({4}, rng);
  auto gain = random_tensor({4}, rng);
  auto table = random_tensor({6, 4}, rng);
  const std::vector<int> ids = {5, 0, 5, 2};
  const std::vector<int> targets = {1, 3, 0};
  const std::vector<std::uint8_t> mask = {1, 1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 0};
  // Weights keep sums of normalized outputs from being constant.
  auto w = Tensor::uniform({3, 4}, 1.0, rng);

  struct Case {
    const char* name;
    std::function<Tensor()> f;
    std::vector<Tensor> inputs;
  };
  const std::vector<Case> cases = {
      {"matmul", [&] { return sum(square(matmul(a, b))); }, {a, b}},
      {"transpose", [&] { return sum(mul(transpose(a), transpose(c))); }, {a, c}},
      {"add", [&] { return sum(square(add(a, c))); }, {a, c}},
      {"sub", [&] { return sum(square(sub(a, c))); }, {a, c}},
      {"mul", [&] { return sum(mul(a, c)); }, {a, c}},
      {"scale", [&] { return sum(square(scale(a, -2.5))); }, {a}},
      {"add_bias", [&] { return sum(square(add_bias(a, bias))); }, {a, bias}},
      {"relu", [&] { return sum(mul(relu(a), c)); }, {a}},
      {"softmax", [&] { return sum(mul(softmax(a), w)); }, {a}},
      {"softmax axis 0", [&] { return sum(mul(softmax(a, 0), w)); }, {a}},
      {"masked_softmax", [&] { return sum(mul(masked_softmax(a, mask), w)); }, {a}},
      {"log_softmax", [&] { return sum(mul(log_softmax(a), w)); }, {a}},
      {"embedding", [&] { return sum(square(embedding(table, ids))); }, {table}},
      {"concat_cols", [&] { return sum(square(concat_cols({a, c}))); }, {a, c}},
      {"concat_rows", [&] { return sum(mul(concat_rows({a, c}), concat_rows({c, a}))); }, {a, c}},
      {"slice_cols", [&] { return sum(square(slice_cols(a, 1, 3))); }, {a}},
      {"slice_rows", [&] { return sum(square(slice_rows(a, 1, 3))); }, {a}},
      {"layer_norm", [&] { return sum(mul(layer_norm(a, gain, bias), w)); }, {a, gain, bias}},
      {"mean", [&] { return square(mean(a)); }, {a}},
      {"pick", [&] { return square(pick(a, 2, 1)); }, {a}},
      {"cross_entropy", [&] { return cross_entropy(a, targets); }, {a}},
  };
  for (const auto& k : cases) {
    CAPTURE(k.name);
    const auto r = check_gradients(k.f, k.inputs);
    CHECK(r.max_relative_error < 1e-5);
  }
}

TEST_CASE("backward is deterministic and accumulates into leaves") {
  Rng rng(4);
  auto a = random_tensor({2, 3}, rng);
  auto b = random_tensor({3, 2}, rng);
  const auto loss = sum(square(matmul(a, b)));
  loss.backward();
  const std::vector<double> first(a.grad().begin(), a.grad().end());
  a.zero_grad();
  b.zero_grad();
  loss.backward();
  const std::vector<double> second(a.grad().begin(), a.grad().end());
  CHECK(first == second);
  loss.backward();
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(a.grad()[i] == 2 * first[i]);
}

TEST_CASE("every reachable requires_grad tensor gets a gradient") {
  Rng rng(6);
  auto a = random_tensor({2, 2}, rng);
  auto b = random_tensor({2, 2}, rng);
  auto frozen = random_tensor({2, 2}, rng, false);
  const auto loss = sum(mul(add(a, frozen), b));
  const auto record = ComputationRecord::trace(loss);
  record.backward();
  CHECK(a.has_grad());
  CHECK(b.has_grad());
  CHECK_FALSE(frozen.has_grad());
  for (const Node* n : record.operations()) CHECK(n->grad.size() == n->data.size());
}

TEST_CASE("no-grad guard builds no graph") {
  Rng rng(9);
  auto a = random_tensor({2, 2}, rng);
  Tensor y;
  {
    NoGradGuard guard;
    y = matmul(a, a);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("dropout") {
  Rng rng(12);
  const auto x = Tensor::filled({50, 40}, 1.0);
  const auto eval = dropout(x, 0.2, rng, false);
  for (double v : eval.data()) CHECK(v == 1.0);

  Rng r1(99), r2(99);
  const auto d1 = dropout(x, 0.2, r1, true);
  const auto d2 = dropout(x, 0.2, r2, true);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < d1.size(); ++i) {
    CHECK(d1.at(i) == d2.at(i));
    CHECK((d1.at(i) == 0.0 || d1.at(i) == doctest::Approx(1.25)));
    kept += d1.at(i) != 0.0;
  }
  // 2000 Bernoulli(0.8) draws: mean within a generous band.
  CHECK(kept > 1500);
  CHECK(kept < 1700);
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  Rng rng(13);
  const auto x = Tensor::uniform({4, 6}, 5.0, rng);
  const auto y = layer_norm(x, Tensor::filled({6}, 1.0), Tensor::zeros({6}));
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 6; ++c) m += y.at(r, c);
    m /= 6;
    for (std::size_t c = 0; c < 6; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    v /= 6;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("shape invariants") {
  CHECK(kind_of([] { Tensor::from({2, 2}, {1, 2, 3}); }) == ErrorKind::kDimension);
  const auto t = Tensor::zeros({3, 5});
  CHECK(t.size() == 15);
  CHECK(shape_size(t.shape()) == t.size());
  CHECK(kind_of([] { embedding(Tensor::zeros({2, 2}), std::vector<int>{2}); }) ==
        ErrorKind::kIndex);
}

TEST_CASE("rng state round trip") {
  Rng a(42);
  a.next();
  const auto state = a.state();
  const auto expected = a.next();
  Rng b(0);
  b.restore(state);
  CHECK(b.next() == expected);
}
