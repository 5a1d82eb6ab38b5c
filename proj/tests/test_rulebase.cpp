#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kasimp/error.hpp"
#include "kasimp/random.hpp"
#include "kasimp/rulebase.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kas;

namespace {

const char* kTable =
    "0.99623\tVP\trecipient\thave receive\n"
    "0.75530\tNN\trecipient\twinner\n"
    "0.58694\tNN\trecipient\treceiver\n"
    "0.46935\tNN\trecipient\thost\n";

std::vector<oracle::RuleRow> rows_of(const std::vector<Rule>& rules) {
  std::vector<oracle::RuleRow> rows;
  for (const auto& r : rules) rows.push_back({r.weight, r.type, r.normal, r.simple});
  return rows;
}

std::size_t index_of(const std::vector<Rule>& rules, const Rule* rule) {
  return static_cast<std::size_t>(rule - rules.data());
}

}  // namespace

TEST_CASE("parse rule lines") {
  const auto parsed = parse_rulebase_text(kTable);
  REQUIRE(parsed.rules.size() == 4);
  CHECK(parsed.malformed == 0);
  const auto& winner = parsed.rules[1];
  CHECK(winner.weight == 0.75530);
  CHECK(winner.type == "NN");
  CHECK(winner.normal == Tokens{"recipient"});
  CHECK(winner.simple == Tokens{"winner"});
  CHECK(parsed.rules[0].simple == Tokens{"have", "receive"});

  CHECK(parse_rulebase_text("").rules.empty());
}

TEST_CASE("malformed rows are counted") {
  const auto parsed = parse_rulebase_text(
      "# comment\n"
      "0.5\tNN\ta\tb\n"
      "notanumber\tNN\ta\tb\n"
      "0.5\tNN\ta\n"
      "1.5\tNN\ta\tb\n"
      "0\tNN\ta\tb\n"
      "0.5\tNN\ta\ta\n"
      "0.5\tNN\t\tb\n");
  CHECK(parsed.rules.size() == 1);
  CHECK(parsed.malformed == 6);

  const auto filtered = parse_rulebase_text(kTable, 0.5);
  CHECK(filtered.rules.size() == 3);
  CHECK(filtered.filtered == 1);
}

TEST_CASE("unreadable rulebase file") {
  try {
    parse_rulebase("/nonexistent/rules.tsv");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
}

TEST_CASE("serialization is byte stable") {
  const std::string text = std::string(kTable) + "1\tJJ\tvery large\tbig\n";
  const auto parsed = parse_rulebase_text(text);
  CHECK(serialize_rulebase(parsed.rules) == text);
  const auto with_junk = parse_rulebase_text("# c\nbad line\n" + text);
  CHECK(serialize_rulebase(with_junk.rules) == text);

  testutil::TempDir dir("rules");
  testutil::write_file(dir.file("r.tsv"), text);
  const auto loaded = parse_rulebase(dir.file("r.tsv"));
  CHECK(loaded.rules == parsed.rules);
  CHECK(rule_id(loaded.rules[1]) == rule_id(parsed.rules[1]));
}

TEST_CASE("rule ids") {
  const auto rules = parse_rulebase_text(kTable).rules;
  CHECK(rule_id(rules[1]) == rule_id(parse_rulebase_text(kTable).rules[1]));
  CHECK(rule_id(rules[1]) != rule_id(rules[2]));
  CHECK(rule_id(rules[1]).size() == 32);
  Rule retyped = rules[1];
  retyped.type = "VB";
  CHECK(rule_id(retyped) != rule_id(rules[1]));
  // Weight does not participate.
  Rule reweighted = rules[1];
  reweighted.weight = 0.1;
  CHECK(rule_id(reweighted) == rule_id(rules[1]));
}

TEST_CASE("candidate rules on the recipient example") {
  const RuleIndex index(parse_rulebase_text(kTable).rules);
  const auto matches = index.candidate_rules(split_tokens("the recipient of the medal"));
  REQUIRE(matches.size() == 4);
  for (const auto& m : matches) {
    CHECK(m.source == TokenSpan{1, 2});
    CHECK_FALSE(m.target_position.has_value());
  }
  CHECK(matches[0].rule->weight > matches[1].rule->weight);
  CHECK(matches[1].rule->weight > matches[2].rule->weight);
  CHECK(matches[2].rule->weight > matches[3].rule->weight);

  CHECK(index.candidate_rules(split_tokens("nothing here")).empty());
  CHECK(index.bucket("recipient").size() == 4);
  CHECK(index.bucket("winner").empty());
}

TEST_CASE("multi-token normal sides") {
  const RuleIndex index(parse_rulebase_text("0.9\tJJ\tvery large\tbig\n0.8\tJJ\tvery\treally\n").rules);
  const auto matches = index.candidate_rules(split_tokens("a very large dog"));
  REQUIRE(matches.size() == 2);
  CHECK(matches[0].source == TokenSpan{1, 3});
  CHECK(matches[1].source == TokenSpan{1, 2});
  CHECK(index.candidate_rules(split_tokens("a very")).size() == 1);
}

TEST_CASE("applied rules") {
  const RuleIndex index(parse_rulebase_text(kTable).rules);
  const auto normal = split_tokens("the recipient of the medal");

  auto applied = index.applied_rules(normal, split_tokens("the winner of the medal"));
  REQUIRE(applied.size() == 1);
  CHECK(applied[0].rule->simple == Tokens{"winner"});
  CHECK(applied[0].target_position == std::optional<std::size_t>(1));

  CHECK(index.applied_rules(normal, normal).empty());

  applied = index.applied_rules(normal, split_tokens("the receiver of the medal"));
  REQUIRE(applied.size() == 1);
  CHECK(applied[0].rule->simple == Tokens{"receiver"});

  applied = index.applied_rules(normal, split_tokens("they have receive it"));
  REQUIRE(applied.size() == 1);
  CHECK(applied[0].rule->simple == Tokens{"have", "receive"});
  CHECK(applied[0].target_position == std::optional<std::size_t>(1));

  // The normal side surviving in the target blocks the rule.
  CHECK(index.applied_rules(normal, split_tokens("the recipient and winner")).empty());
}

TEST_CASE("type gate") {
  RuleIndex index(parse_rulebase_text(kTable).rules);
  index.set_type_gate([](std::span<const std::string> s) {
    return std::vector<std::string>(s.size(), "NN");
  });
  CHECK(index.candidate_rules(split_tokens("the recipient")).size() == 3);
}

TEST_CASE("candidate and applied rules match a span-scan oracle") {
  Rng rng(5);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
  auto phrase = [&](std::size_t max_len) {
    Tokens p;
    const std::size_t len = 1 + rng.below(max_len);
    for (std::size_t i = 0; i < len; ++i) p.push_back(words[rng.below(words.size())]);
    return p;
  };
  std::vector<Rule> rules;
  while (rules.size() < 25) {
    Rule r{0.01 + 0.99 * rng.uniform(), "X", phrase(3), phrase(2), ""};
    if (r.normal != r.simple) rules.push_back(r);
  }
  const RuleIndex index(rules);
  const auto rows = rows_of(index.rules());
  for (int trial = 0; trial < 100; ++trial) {
    const auto sentence = phrase(8);
    const auto target = phrase(8);
    std::set<oracle::Hit> got;
    for (const auto& m : index.candidate_rules(sentence)) {
      got.insert({index_of(index.rules(), m.rule), m.source.begin, m.source.end});
      CHECK(Tokens(sentence.begin() + m.source.begin, sentence.begin() + m.source.end) ==
            m.rule->normal);
    }
    CHECK(got == oracle::scan_candidates(rows, sentence));

    std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> applied;
    for (const auto& m : index.applied_rules(sentence, target)) {
      REQUIRE(m.target_position);
      applied.insert(
          {index_of(index.rules(), m.rule), m.source.begin, m.source.end, *m.target_position});
    }
    CHECK(applied == oracle::scan_applied(rows, sentence, target));
  }
}
