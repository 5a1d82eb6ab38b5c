#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "kasimp/dmass.hpp"
#include "kasimp/error.hpp"
#include "kasimp/gradcheck.hpp"
#include "kasimp/random.hpp"
#include "test_util.hpp"

using namespace kas;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ModelConfig memory_config() {
  ModelConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 4;
  c.d_ff = 8;
  c.vocab_size = 9;
  c.dropout = 0.0;
  c.mode = Mode::kDmass;
  return c;
}

}  // namespace

TEST_CASE("append then mean update") {
  RuleMemory memory(3);
  const std::vector<double> k1 = {1, 2, 3}, v1 = {4, 5, 6};
  memory.update("r", k1, v1);
  REQUIRE(memory.slots("r").size() == 1);
  CHECK(memory.slots("r")[0].key == k1);
  CHECK(memory.slots("r")[0].value == v1);
  CHECK(memory.slots("r")[0].update_count == 1);

  const std::vector<double> k2 = {3, 2, 1}, v2 = {0, 1, 0};
  memory.update("r", k2, v2);
  CHECK(memory.slots("r")[0].key == std::vector<double>{2, 2, 2});
  CHECK(memory.slots("r")[0].value == std::vector<double>{2, 3, 3});
  CHECK(memory.slots("r")[0].update_count == 2);
  CHECK(memory.rule_count() == 1);

  memory.update("s", k2, v2);
  CHECK(memory.rule_count() == 2);
  CHECK(memory.slot_count() == 2);
  CHECK_FALSE(memory.contains("t"));
}

TEST_CASE("updating twice with the same vectors is a fixed point") {
  Rng rng(1);
  RuleMemory memory(5);
  const auto k = random_vector(rng, 5), v = random_vector(rng, 5);
  memory.update("r", k, v);
  const auto before = memory.slots("r")[0];
  memory.update("r", k, v);
  CHECK(bit_equal(memory.slots("r")[0].key, before.key));
  CHECK(bit_equal(memory.slots("r")[0].value, before.value));
}

TEST_CASE("wrong vector size is a contract violation") {
  RuleMemory memory(3);
  const std::vector<double> k = {1, 2};
  try {
    memory.update("r", k, k);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kContract);
  }
}

TEST_CASE("multi-slot memory averages into the nearest key once full") {
  RuleMemory memory(1, 2);
  memory.update("r", std::vector<double>{0.0}, std::vector<double>{0.0});
  memory.update("r", std::vector<double>{10.0}, std::vector<double>{1.0});
  memory.update("r", std::vector<double>{8.0}, std::vector<double>{3.0});
  const auto slots = memory.slots("r");
  REQUIRE(slots.size() == 2);
  CHECK(slots[0].key[0] == 0.0);
  CHECK(slots[1].key[0] == 9.0);
  CHECK(slots[1].value[0] == 2.0);
}

TEST_CASE("persistence round trips bit-exactly") {
  Rng rng(2);
  RuleMemory memory(6, 2);
  for (int i = 0; i < 20; ++i) {
    memory.update("rule" + std::to_string(rng.below(5)), random_vector(rng, 6),
                  random_vector(rng, 6));
  }
  testutil::TempDir dir("mem");
  memory.save(dir.file("m.mem"));
  const auto loaded = RuleMemory::load(dir.file("m.mem"));
  CHECK(loaded == memory);
  for (const auto& [id, slots] : memory.all()) {
    for (std::size_t i = 0; i < slots.size(); ++i) {
      CHECK(bit_equal(loaded.slots(id)[i].key, slots[i].key));
      CHECK(bit_equal(loaded.slots(id)[i].value, slots[i].value));
    }
  }
  loaded.save(dir.file("again.mem"));
  CHECK(testutil::read_file(dir.file("m.mem")) == testutil::read_file(dir.file("again.mem")));

  testutil::write_file(dir.file("bad.mem"), "not a memory");
  try {
    RuleMemory::load(dir.file("bad.mem"));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFormat);
  }
}

TEST_CASE("memory read examples") {
  MemorySlot a{"a", {1, 0}, {2, 4}, 1};
  MemorySlot b{"b", {0, 1}, {6, 8}, 1};
  MemorySlot c{"c", {0.5, -0.3}, {-1, 3}, 1};

  const auto q = Tensor::from({1, 2}, {0.7, 0.2});
  const std::vector<const MemorySlot*> one = {&a};
  auto r = memory_read(q, one);
  CHECK(r.weights == std::vector<double>{1.0});
  CHECK(r.output.at(0, 0) == 2.0);
  CHECK(r.output.at(0, 1) == 4.0);

  const auto tie = Tensor::from({1, 2}, {0.3, 0.3});
  const std::vector<const MemorySlot*> two = {&a, &b};
  r = memory_read(tie, two);
  CHECK(r.weights[0] == doctest::Approx(0.5));
  CHECK(r.output.at(0, 0) == doctest::Approx(4.0));
  CHECK(r.output.at(0, 1) == doctest::Approx(6.0));

  // Hand-computed softmax-weighted sum over three candidates.
  const std::vector<const MemorySlot*> three = {&a, &b, &c};
  r = memory_read(q, three);
  const double s[] = {0.7, 0.2, 0.35 - 0.06};
  const double z = std::exp(s[0]) + std::exp(s[1]) + std::exp(s[2]);
  double expect0 = 0.0, expect1 = 0.0, total = 0.0;
  const MemorySlot* slots[] = {&a, &b, &c};
  for (int i = 0; i < 3; ++i) {
    const double w = std::exp(s[i]) / z;
    CHECK(std::abs(r.weights[i] - w) < 1e-12);
    total += r.weights[i];
    expect0 += w * slots[i]->value[0];
    expect1 += w * slots[i]->value[1];
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK(std::abs(r.output.at(0, 0) - expect0) < 1e-9);
  CHECK(std::abs(r.output.at(0, 1) - expect1) < 1e-9);

  r = memory_read(q, std::vector<const MemorySlot*>{});
  CHECK(r.output.at(0, 0) == 0.0);
  CHECK(r.weights.empty());

  const auto wide = Tensor::from({1, 3}, {1, 2, 3});
  CHECK_THROWS_AS(memory_read(wide, one), Error);
}

TEST_CASE("gradients reach queries but not stored memory") {
  Rng rng(4);
  MemorySlot a{"a", random_vector(rng, 3), random_vector(rng, 3), 1};
  MemorySlot b{"b", random_vector(rng, 3), random_vector(rng, 3), 1};
  const auto before_a = a;
  const std::vector<const MemorySlot*> cands = {&a, &b};
  auto q = Tensor::uniform({2, 3}, 1.0, rng, true);
  const auto result =
      check_gradients([&] { return sum(square(memory_read(q, cands).output)); }, {q}, 1e-5);
  CHECK(result.max_relative_error < 1e-6);
  CHECK(a == before_a);
  // With a constant query the read is constant: stored slots carry no gradient.
  const auto fixed = Tensor::uniform({2, 3}, 1.0, rng);
  CHECK_FALSE(memory_read(fixed, cands).output.requires_grad());
}

TEST_CASE("candidates follow rule matches and skip untrained rules") {
  const auto parsed = parse_rulebase_text(
      "0.75530\tNN\trecipient\twinner\n0.58694\tNN\trecipient\treceiver\n0.4\tNN\tmedal\tprize\n");
  const RuleIndex index(parsed.rules);
  RuleMemory memory(2);
  memory.update(rule_id(parsed.rules[1]), std::vector<double>{1, 1}, std::vector<double>{2, 2});
  memory.update(rule_id(parsed.rules[0]), std::vector<double>{0, 1}, std::vector<double>{3, 3});
  const auto c = memory_candidates(memory, index, split_tokens("the recipient of the medal"));
  REQUIRE(c.size() == 2);
  CHECK(c[0]->rule_id == rule_id(parsed.rules[0]));
  CHECK(c[1]->rule_id == rule_id(parsed.rules[1]));
  CHECK(memory_candidates(memory, index, split_tokens("no match")).empty());
}

TEST_CASE("combiner") {
  Rng rng(6);
  const auto model = Transformer(memory_config(), 3);
  const auto& p = *model.params().combiner;
  const auto top = Tensor::uniform({2, 4}, 1.0, rng);
  const auto zero = Tensor::zeros({2, 4});
  const auto y1 = combine(top, zero, p);
  const auto y2 = combine(top, zero, p);
  CHECK(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
  CHECK(y1.cols() == 4);
  CHECK_THROWS_AS(combine(top, Tensor::zeros({2, 3}), p), Error);

  const auto r_o = Tensor::uniform({2, 4}, 1.0, rng);
  std::vector<Tensor> inputs = {p.w1, p.b1, p.w2, p.b2, p.norm.gain, p.norm.bias};
  const auto result = check_gradients(
      [&] { return sum(square(combine(top, r_o, p, true, true))); }, inputs, 1e-5);
  CHECK(result.max_relative_error < 1e-4);
}

TEST_CASE("memory forward with an empty memory is the combiner over zero reads") {
  const auto model = Transformer(memory_config(), 3);
  const std::vector<int> src = {4, 5, Vocabulary::kEos};
  const std::vector<int> prefix = {Vocabulary::kBos, 6, 7};
  const auto enc = model.encode(src, false, nullptr);
  const auto fwd = memory_forward(model, prefix, enc, {}, false, nullptr);
  const auto dec = model.decode(prefix, enc, false, nullptr);
  const auto expect = model.project(combine(dec.top(), Tensor::zeros({3, 4}),
                                            *model.params().combiner, true, true));
  CHECK(std::equal(fwd.logits.data().begin(), fwd.logits.data().end(), expect.data().begin()));

  auto base = memory_config();
  base.mode = Mode::kBase;
  const auto plain = Transformer(base, 3);
  CHECK_THROWS_AS(memory_forward(plain, prefix, enc, {}, false, nullptr), Error);
}

TEST_CASE("memory-augmented model gradient check") {
  Rng rng(9);
  const auto model = Transformer(memory_config(), 4);
  MemorySlot a{"a", random_vector(rng, 4), random_vector(rng, 4), 1};
  MemorySlot b{"b", random_vector(rng, 4), random_vector(rng, 4), 1};
  const std::vector<const MemorySlot*> cands = {&a, &b};
  const std::vector<int> src = {4, 5, 6, Vocabulary::kEos};
  const std::vector<int> target = {7, 8, Vocabulary::kEos};
  const auto prefix = teacher_forcing_input(target);
  const auto result = check_gradients(
      [&] {
        const auto enc = model.encode(src, false, nullptr);
        return cross_entropy(memory_forward(model, prefix, enc, cands, false, nullptr).logits,
                             target);
      },
      model.params().tensors(), 1e-5);
  CHECK(result.max_relative_error < 1e-4);
}
