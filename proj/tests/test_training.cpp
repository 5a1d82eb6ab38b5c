#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>

#include "kasimp/checkpoint.hpp"
#include "kasimp/config.hpp"
#include "kasimp/error.hpp"
#include "kasimp/optimizer.hpp"
#include "kasimp/trainer.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace kas;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kCheck;
}

RunConfig small_config(const char* mode = "base") {
  RunConfig c;
  c.set("layers", "1");
  c.set("heads", "2");
  c.set("d_model", "8");
  c.set("batch_size", "4");
  c.set("min_count", "0");
  c.set("mode", mode);
  return c;
}

struct Fixture {
  synth::RuleCorpus corpus;
  Vocabulary vocab;
  RuleIndex index;
  std::vector<TrainingExample> examples;

  explicit Fixture(std::size_t pairs = 24) : corpus(make(pairs)),
        vocab(Vocabulary::build(corpus.train, 0)),
        index(corpus.rules),
        examples(prepare_examples(corpus.train, vocab, &index)) {}

  static synth::RuleCorpus make(std::size_t pairs) {
    synth::RuleCorpusSpec spec;
    spec.pairs = pairs;
    spec.rules = 4;
    spec.test = 0;
    spec.rare_fraction = 0.0;
    spec.fillers = 6;
    return synth::make_rule_corpus(spec);
  }
};

bool same_params(const Transformer& a, const Transformer& b) {
  const auto na = a.params().named(), nb = b.params().named();
  if (na.size() != nb.size()) return false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto x = na[i].second.data(), y = nb[i].second.data();
    if (na[i].first != nb[i].first || x.size() != y.size()) return false;
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config defaults") {
  const RunConfig c;
  CHECK(c.learning_rate == 0.1);
  CHECK(c.clip_threshold == 4.0);
  CHECK(c.clip_mode == ClipMode::kGlobalNorm);
  CHECK(c.model.dropout == 0.2);
  CHECK(c.model.d_model == 300);
  CHECK(c.model.layers == 4);
  CHECK(c.model.heads == 5);
  CHECK(c.model.memory_layer == 1);
  CHECK(c.adagrad_initial_accumulator == 0.1);
  CHECK(c.batch_size == 32);
  CHECK(c.min_count == 3);
}

TEST_CASE("config text, aliases and errors") {
  RunConfig c;
  c.load_text("# comment\nembedding_dim = 32\nheads=4\n\ngradient_clip_norm=2.5\n");
  CHECK(c.model.d_model == 32);
  CHECK(c.model.d_ff == 128);
  CHECK(c.model.heads == 4);
  CHECK(c.clip_threshold == 2.5);
  c.set("d_ff", "50");
  c.set("d_model", "16");
  CHECK(c.model.d_ff == 50);
  c.set("valid_refs", "a.txt,b.txt");
  CHECK(c.valid_refs == std::vector<std::string>{"a.txt", "b.txt"});

  RunConfig copy;
  copy.load_text(c.to_text());
  CHECK(copy == c);
  CHECK(copy.get("learning_rate") == "0.1");

  CHECK(kind_of([&] { c.set("no_such_key", "1"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { c.set("layers", "two"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { c.set("mode", "other"); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { c.load_text("no equals sign\n"); }) == ErrorKind::kConfig);
  RunConfig bad;
  bad.learning_rate = 0.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { c.load_file("/nonexistent/run.cfg"); }) == ErrorKind::kIo);
}

TEST_CASE("data directory resolution") {
  RunConfig c;
  c.data_dir = "/data";
  CHECK(c.resolve("x.txt") == "/data/x.txt");
  CHECK(c.resolve("/abs/x.txt") == "/abs/x.txt");
  c.data_dir.clear();
  ::setenv("KASIMP_DATA_DIR", "/env", 1);
  CHECK(c.resolve("x.txt") == "/env/x.txt");
  ::unsetenv("KASIMP_DATA_DIR");
  CHECK(c.resolve("x.txt") == "x.txt");
}

TEST_CASE("adagrad step") {
  auto p = Tensor::from({2}, {1.0, -1.0}, true);
  p.mutable_grad()[0] = 2.0;
  p.mutable_grad()[1] = 0.5;
  Adagrad opt({p}, 0.1, 0.1);
  opt.step();
  CHECK(p.at(0) == 1.0 - 0.1 * 2.0 / std::sqrt(4.1));
  CHECK(p.at(1) == -1.0 - 0.1 * 0.5 / std::sqrt(0.35));
  CHECK(opt.accumulators()[0][0] == 4.1);
}

TEST_CASE("giant gradients are clipped to norm 4") {
  auto a = Tensor::zeros({3}, true), b = Tensor::zeros({2, 2}, true);
  for (auto& g : a.mutable_grad()) g = 1e6;
  for (auto& g : b.mutable_grad()) g = -3e5;
  std::vector<Tensor> params = {a, b};
  const double before = clip_global_norm(params, 4.0);
  CHECK(before > 1e6);
  CHECK(std::abs(global_grad_norm(params) - 4.0) < 1e-12);

  for (auto& g : a.mutable_grad()) g = 1e6;
  for (auto& g : b.mutable_grad()) g = -3e5;
  clip_values(params, 4.0);
  for (double g : a.grad()) CHECK(g == 4.0);
  for (double g : b.grad()) CHECK(g == -4.0);

  a.mutable_grad()[0] = std::nan("");
  CHECK(kind_of([&] { clip_global_norm(params, 4.0); }) == ErrorKind::kNumeric);
}

TEST_CASE("critic modes alternate phases") {
  Fixture f;
  auto config = small_config("dcss");
  Trainer t(config, f.vocab, f.examples, &f.index);
  std::vector<Phase> phases;
  for (int i = 0; i < 4; ++i) phases.push_back(t.step().phase);
  CHECK(phases == std::vector<Phase>{Phase::kSequence, Phase::kCritic, Phase::kSequence,
                                     Phase::kCritic});
  config.critic_schedule = 2;
  Trainer k(config, f.vocab, f.examples, &f.index);
  phases.clear();
  for (int i = 0; i < 6; ++i) phases.push_back(k.step().phase);
  CHECK(phases == std::vector<Phase>{Phase::kSequence, Phase::kSequence, Phase::kCritic,
                                     Phase::kSequence, Phase::kSequence, Phase::kCritic});
}

TEST_CASE("critic batch without firing terms changes nothing") {
  Fixture f;
  // Strip all critic terms.
  auto examples = f.examples;
  for (auto& ex : examples) ex.critic.terms.clear();
  auto config = small_config("dcss");
  Trainer t(config, f.vocab, examples, &f.index);
  t.step();
  const auto before = t.checkpoint();
  const auto log = t.step();
  CHECK(log.phase == Phase::kCritic);
  CHECK_FALSE(log.updated);
  CHECK(log.critic_terms == 0);
  const auto after = t.checkpoint();
  for (std::size_t i = 0; i < before.params.size(); ++i) {
    CHECK(std::equal(before.params[i].second.data().begin(), before.params[i].second.data().end(),
                     after.params[i].second.data().begin()));
  }
  CHECK(t.next_phase() == Phase::kSequence);
}

TEST_CASE("single-pair critic run learns the rule") {
  const SentencePair pair{split_tokens("the recipient of the medal"),
                          split_tokens("the winner of the medal"),
                          {}};
  const RuleIndex index(parse_rulebase_text("0.75530\tNN\trecipient\twinner\n").rules);
  const auto vocab = Vocabulary::build(std::vector<SentencePair>{pair}, 0);
  const auto examples = prepare_examples(std::vector<SentencePair>{pair}, vocab, &index);
  REQUIRE(examples[0].critic.terms.size() == 1);
  auto config = small_config("dcss");
  config.batch_size = 1;
  config.model.dropout = 0.0;
  Trainer t(config, vocab, examples, &index);
  std::size_t fired = 0;
  for (int i = 0; i < 500; ++i) fired += t.step().critic_terms;
  CHECK(fired > 0);
  const auto out = decode_sentence(t.model(), vocab, nullptr, nullptr, pair.normal, config);
  CHECK(out == pair.simple);
}

TEST_CASE("same config and seed give identical loss curves") {
  Fixture f;
  for (const char* mode : {"base", "dmass+dcss"}) {
    const auto config = small_config(mode);
    Trainer a(config, f.vocab, f.examples, &f.index);
    Trainer b(config, f.vocab, f.examples, &f.index);
    for (int i = 0; i < 12; ++i) {
      const auto la = a.step(), lb = b.step();
      CHECK(format_step_log(la) == format_step_log(lb));
      CHECK(std::memcmp(&la.loss, &lb.loss, sizeof(double)) == 0);
    }
    CHECK(same_params(a.model(), b.model()));
    CHECK(a.memory() == b.memory());
  }
}

TEST_CASE("memory modes store one slot per trained rule") {
  Fixture f;
  const auto config = small_config("dmass");
  Trainer t(config, f.vocab, f.examples, &f.index);
  for (int i = 0; i < 10; ++i) t.step();
  CHECK(t.memory().rule_count() == f.corpus.rules.size());
  for (const auto& [id, slots] : t.memory().all()) {
    CHECK(slots.size() == 1);
    CHECK(slots[0].key.size() == 8);
  }
  Trainer base(small_config("base"), f.vocab, f.examples, &f.index);
  base.step();
  CHECK(base.memory().rule_count() == 0);
}

TEST_CASE("checkpoint round trip and continuation") {
  Fixture f;
  testutil::TempDir dir("ckpt");
  for (const char* mode : {"base", "dmass+dcss"}) {
    const auto config = small_config(mode);
    Trainer a(config, f.vocab, f.examples, &f.index);
    for (int i = 0; i < 5; ++i) a.step();
    const auto path = dir.file(std::string(mode) + ".ckpt");
    a.save(path);

    const auto loaded = Checkpoint::load(path);
    CHECK(loaded.step == 5);
    CHECK(loaded.config == a.config());
    Trainer b(config, f.vocab, f.examples, &f.index);
    b.restore(loaded);
    if (uses_memory(config.model.mode)) b.memory() = RuleMemory::load(memory_path(path));
    // Zero further steps: parameters are bit-identical.
    CHECK(same_params(a.model(), b.model()));
    CHECK(b.steps_done() == 5);

    for (int i = 0; i < 4; ++i) {
      const auto la = a.step(), lb = b.step();
      CHECK(std::memcmp(&la.loss, &lb.loss, sizeof(double)) == 0);
    }
    CHECK(same_params(a.model(), b.model()));
  }

  testutil::write_file(dir.file("junk.ckpt"), "not a checkpoint");
  CHECK(kind_of([&] { Checkpoint::load(dir.file("junk.ckpt")); }) == ErrorKind::kFormat);
}

TEST_CASE("train writes the log and final checkpoint") {
  Fixture f;
  testutil::TempDir dir("train");
  auto config = small_config("dcss");
  config.steps = 6;
  config.checkpoint = dir.file("model.ckpt");
  config.log = dir.file("train.log");
  config.eval_interval = 3;
  Trainer t(config, f.vocab, f.examples, &f.index);
  ValidationSet valid;
  for (const auto& p : f.corpus.train) {
    valid.sources.push_back(p.normal);
    valid.references.push_back({p.simple});
  }
  const auto logs = t.train(&valid);
  CHECK(logs.size() == 6);
  const auto text = testutil::read_file(config.log);
  CHECK(text.rfind("# build ", 0) == 0);
  CHECK(text.find("valid_sari") != std::string::npos);
  CHECK(text.find("\tcritic\t") != std::string::npos);
  CHECK(std::filesystem::exists(config.checkpoint));
  CHECK(std::filesystem::exists(config.checkpoint + ".best"));
  CHECK(Checkpoint::load(config.checkpoint).step == 6);
}

TEST_CASE("non-finite loss aborts and keeps the last checkpoint") {
  Fixture f;
  testutil::TempDir dir("nan");
  auto config = small_config("base");
  config.learning_rate = 1e300;
  config.steps = 50;
  config.checkpoint = dir.file("model.ckpt");
  config.checkpoint_interval = 1;
  Trainer t(config, f.vocab, f.examples, &f.index);
  CHECK(kind_of([&] { t.train(); }) == ErrorKind::kNumeric);
  CHECK(t.steps_done() < 50);
  const auto kept = Checkpoint::load(config.checkpoint);
  CHECK(kept.step >= 1);
  CHECK(kept.step <= t.steps_done());
  for (const auto& [name, p] : kept.params) {
    for (double x : p.data()) REQUIRE(std::isfinite(x));
  }
}
