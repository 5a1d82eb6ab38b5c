#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kasimp/decode.hpp"
#include "kasimp/error.hpp"
#include "kasimp/random.hpp"
#include "oracles.hpp"

using namespace kas;

namespace {

// Scores drawn from a seeded generator keyed by the prefix, so every instance
// with the same seed agrees regardless of query order.
class TableScorer : public NextTokenScorer {
 public:
  TableScorer(std::size_t vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}
  std::size_t vocab_size() const override { return vocab_; }
  std::vector<double> log_probs(std::span<const int> prefix) override {
    std::uint64_t h = seed_ * 0x9e3779b97f4a7c15ULL + 1;
    for (int t : prefix) h = (h ^ static_cast<std::uint64_t>(t + 1)) * 0x100000001b3ULL;
    Rng rng(h);
    std::vector<double> logits(vocab_);
    double z = 0.0;
    for (auto& x : logits) {
      x = rng.uniform(-2.0, 2.0);
      z += std::exp(x);
    }
    for (auto& x : logits) x -= std::log(z);
    return logits;
  }

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
};

ModelConfig toy(std::size_t vocab) {
  ModelConfig c;
  c.layers = 1;
  c.heads = 1;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = vocab;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("greedy picks the argmax at every step") {
  TableScorer scorer(5, 3);
  DecodeOptions options;
  options.max_len = 6;
  options.bos = 0;
  options.eos = 2;
  const auto h = greedy_decode(scorer, options);
  CHECK(h.tokens.front() == 0);
  double total = 0.0;
  for (std::size_t i = 1; i < h.tokens.size(); ++i) {
    const auto lp = scorer.log_probs(std::span<const int>(h.tokens).first(i));
    CHECK(lp[h.tokens[i]] == *std::max_element(lp.begin(), lp.end()));
    total += lp[h.tokens[i]];
  }
  CHECK(h.log_prob == total);
  CHECK(h.finished == (h.tokens.back() == 2));
  CHECK(h.tokens.size() <= 7);
}

TEST_CASE("beam of one equals greedy") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    TableScorer a(6, seed), b(6, seed);
    DecodeOptions options;
    options.max_len = 8;
    options.bos = 0;
    options.eos = 1;
    const auto g = greedy_decode(a, options);
    const auto beams = beam_decode(b, options);
    REQUIRE(beams.size() == 1);
    CHECK(beams[0].tokens == g.tokens);
    CHECK(beams[0].log_prob == g.log_prob);
  }
}

TEST_CASE("beam top-1 equals exhaustive enumeration") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (std::size_t max_len : {1, 2, 3}) {
      TableScorer scorer(3, seed), reference(3, seed);
      DecodeOptions options;
      options.max_len = max_len;
      options.beam_size = max_len <= 2 ? 3 : 9;
      options.bos = 0;
      options.eos = 2;
      const auto beams = beam_decode(scorer, options);
      const auto best = oracle::best_sequence(
          [&](const std::vector<int>& p) { return reference.log_probs(p); }, 0, 2, max_len);
      REQUIRE_FALSE(beams.empty());
      CHECK(beams[0].tokens == best.tokens);
      CHECK(beams[0].log_prob == best.log_prob);
    }
  }
}

TEST_CASE("beam results are sorted and bounded") {
  TableScorer scorer(7, 11);
  DecodeOptions options;
  options.max_len = 5;
  options.beam_size = 4;
  options.bos = 0;
  options.eos = 3;
  const auto beams = beam_decode(scorer, options);
  CHECK(beams.size() <= 4);
  for (std::size_t i = 1; i < beams.size(); ++i) CHECK(beams[i - 1].log_prob >= beams[i].log_prob);
  for (const auto& h : beams) {
    CHECK(h.finished == (h.tokens.back() == 3));
    CHECK(h.tokens.size() <= 6);
  }

  options.length_normalize = true;
  TableScorer again(7, 11);
  const auto normalized = beam_decode(again, options);
  for (std::size_t i = 1; i < normalized.size(); ++i) {
    CHECK(normalized[i - 1].log_prob / normalized[i - 1].length >=
          normalized[i].log_prob / normalized[i].length);
  }
}

TEST_CASE("invalid options") {
  TableScorer scorer(3, 1);
  DecodeOptions options;
  options.max_len = 0;
  CHECK_THROWS_AS(greedy_decode(scorer, options), Error);
  options.max_len = 2;
  options.beam_size = 0;
  CHECK_THROWS_AS(beam_decode(scorer, options), Error);
}

TEST_CASE("output ids strip the frame") {
  Hypothesis h{{Vocabulary::kBos, 7, 8, Vocabulary::kEos}, -1.0, true, 3};
  CHECK(output_ids(h) == std::vector<int>{7, 8});
  h.tokens.pop_back();
  CHECK(output_ids(h) == std::vector<int>{7, 8});
}

TEST_CASE("transformer scorer agrees with the full decoder") {
  const Transformer model(toy(9), 5);
  const std::vector<int> src = {4, 5, 6, Vocabulary::kEos};
  TransformerScorer scorer(model, src);
  DecodeOptions options;
  options.max_len = 5;
  const auto g = greedy_decode(scorer, options);
  const auto enc = model.encode(src, false, nullptr);
  const auto logits = model.project(model.decode(g.tokens, enc, false, nullptr).top());
  const auto lp = log_softmax(logits);
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < g.tokens.size(); ++s) total += lp.at(s, g.tokens[s + 1]);
  CHECK(std::abs(total - g.log_prob) < 1e-9);

  // Beam 1 against greedy on real models.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Transformer m(toy(9), seed);
    TransformerScorer a(m, src), b(m, src);
    CHECK(beam_decode(b, options)[0].tokens == greedy_decode(a, options).tokens);
  }
}

TEST_CASE("memory scorer reads the rule slots of the source") {
  auto config = toy(9);
  config.mode = Mode::kDmass;
  const Transformer model(config, 2);
  const auto parsed =
      parse_rulebase_text("0.75530\tNN\trecipient\twinner\n0.58694\tNN\trecipient\treceiver\n");
  const RuleIndex index(parsed.rules);
  RuleMemory memory(8);
  Rng rng(3);
  for (const auto& rule : parsed.rules) {
    std::vector<double> k(8), v(8);
    for (auto& x : k) x = rng.uniform(-1, 1);
    for (auto& x : v) x = rng.uniform(-1, 1);
    memory.update(rule_id(rule), k, v);
  }
  const auto tokens = split_tokens("the recipient");
  const std::vector<int> ids = {4, 5, Vocabulary::kEos};
  MemoryScorer scorer(model, memory, index, tokens, ids);
  CHECK(scorer.candidate_count() == 2);
  const std::vector<int> prefix = {Vocabulary::kBos};
  scorer.log_probs(prefix);
  REQUIRE(scorer.last_weights().size() == 2);
  CHECK(std::abs(scorer.last_weights()[0] + scorer.last_weights()[1] - 1.0) < 1e-12);
  CHECK(scorer.last_weights()[0] > 0.0);
  CHECK(scorer.last_weights()[1] > 0.0);

  MemoryScorer empty(model, memory, index, split_tokens("the cat"), ids);
  CHECK(empty.candidate_count() == 0);
  empty.log_probs(prefix);
  CHECK(empty.last_weights().empty());
}
