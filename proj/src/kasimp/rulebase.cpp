#include "kasimp/rulebase.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kasimp/error.hpp"

namespace kas {

namespace {

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

bool parse_rule_line(const std::string& line, Rule& rule) {
  std::vector<std::string> f;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (f.size() != 4) return false;
  std::istringstream num(f[0]);
  num >> rule.weight;
  if (num.fail() || !num.eof() || !std::isfinite(rule.weight)) return false;
  if (!(rule.weight > 0.0 && rule.weight <= 1.0)) return false;
  rule.weight_text = f[0];
  rule.type = f[1];
  rule.normal = split_tokens(f[2]);
  rule.simple = split_tokens(f[3]);
  return !rule.type.empty() && !rule.normal.empty() && !rule.simple.empty() &&
         rule.normal != rule.simple;
}

}  // namespace

RuleId rule_id(const Rule& rule) {
  std::string key = rule.type;
  key += '\x1f';
  key += join_tokens(rule.normal);
  key += '\x1f';
  key += join_tokens(rule.simple);
  // Two independent 64-bit hashes make collisions irrelevant at rulebase scale.
  const auto a = fnv1a(key);
  const auto b = fnv1a(key, 0x84222325cbf29ce4ULL);
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

ParsedRulebase parse_rulebase_text(std::string_view text, double min_weight) {
  ParsedRulebase result;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    Rule rule;
    if (!parse_rule_line(line, rule)) {
      ++result.malformed;
      continue;
    }
    if (rule.weight < min_weight) {
      ++result.filtered;
      continue;
    }
    result.rules.push_back(std::move(rule));
  }
  return result;
}

ParsedRulebase parse_rulebase(const std::string& path, double min_weight) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open rulebase " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_rulebase_text(buffer.str(), min_weight);
}

std::string format_rule(const Rule& rule) {
  std::string out = rule.weight_text;
  if (out.empty()) {
    // Shortest representation that reads back to the same double.
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), rule.weight);
    out.assign(buf, ptr);
  }
  out += '\t';
  out += rule.type;
  out += '\t';
  out += join_tokens(rule.normal);
  out += '\t';
  out += join_tokens(rule.simple);
  return out;
}

std::string serialize_rulebase(std::span<const Rule> rules) {
  std::string out;
  for (const auto& r : rules) {
    out += format_rule(r);
    out += '\n';
  }
  return out;
}

std::optional<std::size_t> find_phrase(std::span<const std::string> haystack,
                                       std::span<const std::string> needle) {
  if (needle.empty() || needle.size() > haystack.size()) return std::nullopt;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) return i;
  }
  return std::nullopt;
}

RuleIndex::RuleIndex(std::vector<Rule> rules) : rules_(std::move(rules)) {
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    require(!rules_[i].normal.empty() && !rules_[i].simple.empty(), ErrorKind::kContract,
            "rule with an empty side");
    buckets_[rules_[i].normal.front()].push_back(i);
  }
  for (auto& [token, ids] : buckets_) {
    std::stable_sort(ids.begin(), ids.end(), [this](std::size_t a, std::size_t b) {
      return rules_[a].weight > rules_[b].weight;
    });
  }
}

std::span<const std::size_t> RuleIndex::bucket(std::string_view token) const {
  auto it = buckets_.find(std::string(token));
  if (it == buckets_.end()) return {};
  return it->second;
}

std::vector<RuleMatch> RuleIndex::candidate_rules(std::span<const std::string> sentence) const {
  std::vector<RuleMatch> matches;
  std::vector<std::string> tags;
  if (tagger_) tags = tagger_(sentence);
  for (std::size_t start = 0; start < sentence.size(); ++start) {
    std::vector<RuleMatch> here;
    for (std::size_t idx : bucket(sentence[start])) {
      const Rule& rule = rules_[idx];
      const std::size_t end = start + rule.normal.size();
      if (end > sentence.size()) continue;
      if (!std::equal(rule.normal.begin(), rule.normal.end(), sentence.begin() + start)) continue;
      if (tagger_ && (start >= tags.size() || tags[start] != rule.type)) continue;
      here.push_back({&rule, {start, end}, std::nullopt});
    }
    // Bucket order is already by descending weight.
    matches.insert(matches.end(), here.begin(), here.end());
  }
  return matches;
}

std::vector<RuleMatch> RuleIndex::applied_rules(std::span<const std::string> normal,
                                                std::span<const std::string> target) const {
  std::vector<RuleMatch> applied;
  for (auto& m : candidate_rules(normal)) {
    if (find_phrase(target, m.rule->normal)) continue;
    if (auto pos = find_phrase(target, m.rule->simple)) {
      m.target_position = *pos;
      applied.push_back(m);
    }
  }
  return applied;
}

}  // namespace kas
