#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kasimp/corpus.hpp"

namespace kas {

// One paraphrase rewrite: normal phrase -> simpler phrase, with the syntactic
// type of the normal phrase and a confidence weight in (0, 1].
struct Rule {
  double weight = 0.0;
  std::string type;
  Tokens normal;
  Tokens simple;
  // Weight as written in the source file, kept so serialization reproduces it.
  std::string weight_text;

  friend bool operator==(const Rule&, const Rule&) = default;
};

// Content hash over (type, normal, simple); stable across runs and platforms.
using RuleId = std::string;
RuleId rule_id(const Rule& rule);

struct ParsedRulebase {
  std::vector<Rule> rules;
  std::size_t malformed = 0;
  std::size_t filtered = 0;
};

// TSV rows: weight, type, normal phrase, simple phrase. '#' lines are comments.
// Malformed rows are counted, not fatal. Rules below min_weight are dropped.
ParsedRulebase parse_rulebase(const std::string& path, double min_weight = 0.0);
ParsedRulebase parse_rulebase_text(std::string_view text, double min_weight = 0.0);
std::string format_rule(const Rule& rule);
std::string serialize_rulebase(std::span<const Rule> rules);

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct RuleMatch {
  const Rule* rule = nullptr;
  TokenSpan source;
  std::optional<std::size_t> target_position;
};

// Optional syntactic gate: tags[i] is the tag of token i.
using PosTagger = std::function<std::vector<std::string>(std::span<const std::string>)>;

class RuleIndex {
 public:
  explicit RuleIndex(std::vector<Rule> rules);

  const std::vector<Rule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }

  // Rules whose normal side starts with `token`, by descending weight.
  std::span<const std::size_t> bucket(std::string_view token) const;

  // When set, a match additionally requires the tag at the span start to equal
  // the rule's type.
  void set_type_gate(PosTagger tagger) { tagger_ = std::move(tagger); }

  // Every occurrence of every rule's normal side, ordered by span start then
  // descending weight.
  std::vector<RuleMatch> candidate_rules(std::span<const std::string> sentence) const;

  // Candidates whose simple side occurs in `target` while the normal side does
  // not; target_position is the first occurrence of the simple side.
  std::vector<RuleMatch> applied_rules(std::span<const std::string> normal,
                                       std::span<const std::string> target) const;

 private:
  std::vector<Rule> rules_;
  std::unordered_map<std::string, std::vector<std::size_t>> buckets_;
  PosTagger tagger_;
};

// First index at which `needle` occurs contiguously in `haystack`.
std::optional<std::size_t> find_phrase(std::span<const std::string> haystack,
                                       std::span<const std::string> needle);

}  // namespace kas
