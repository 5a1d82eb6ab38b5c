#include "kasimp/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "kasimp/error.hpp"

namespace kas {

namespace {

using NGram = std::vector<std::string>;
using Counts = std::map<NGram, double>;

Counts ngram_counts(std::span<const std::string> tokens, std::size_t n, double weight = 1.0) {
  Counts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[NGram(tokens.begin() + i, tokens.begin() + i + n)] += weight;
  }
  return counts;
}

double lookup(const Counts& c, const NGram& g) {
  auto it = c.find(g);
  return it == c.end() ? 0.0 : it->second;
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Applies the empty-set convention, then computes F1.
OperationScore finish(bool system_empty, bool reference_empty, double p, double r) {
  if (system_empty && reference_empty) return {1.0, 1.0, 1.0};
  if (system_empty || reference_empty) {
    return {system_empty ? 0.0 : p, reference_empty ? 0.0 : r, 0.0};
  }
  return {p, r, f1_of(p, r)};
}

struct NGramScores {
  OperationScore add, del, keep;
};

NGramScores score_order(std::span<const std::string> source, std::span<const std::string> output,
                        std::span<const Tokens> references, std::size_t n) {
  const double k = static_cast<double>(references.size());
  const Counts s = ngram_counts(source, n, k);
  const Counts o = ngram_counts(output, n, k);
  Counts r;
  for (const auto& ref : references)
    for (const auto& [g, c] : ngram_counts(ref, n)) r[g] += c;

  NGramScores out;

  // Addition, as sets.
  {
    std::set<NGram> sys, ref;
    for (const auto& [g, c] : o)
      if (!s.contains(g)) sys.insert(g);
    for (const auto& [g, c] : r)
      if (!s.contains(g)) ref.insert(g);
    std::size_t good = 0;
    for (const auto& g : sys) good += ref.contains(g);
    const double p = sys.empty() ? 0.0 : static_cast<double>(good) / sys.size();
    const double rc = ref.empty() ? 0.0 : static_cast<double>(good) / ref.size();
    out.add = finish(sys.empty(), ref.empty(), p, rc);
  }

  // Keeping.
  {
    double p_sum = 0.0, good_total = 0.0, all_total = 0.0;
    std::size_t sys_n = 0;
    for (const auto& [g, sc] : s) {
      const double kept = std::min(sc, lookup(o, g));
      const double rc = lookup(r, g);
      const double all = std::min(sc, rc);
      if (all > 0.0) all_total += all;
      if (kept > 0.0) {
        const double good = std::min(kept, rc);
        ++sys_n;
        p_sum += good / kept;
        good_total += good;
      }
    }
    const double p = sys_n ? p_sum / sys_n : 0.0;
    const double rc = all_total > 0.0 ? good_total / all_total : 0.0;
    out.keep = finish(sys_n == 0, all_total == 0.0, p, rc);
  }

  // Deletion.
  {
    double p_sum = 0.0, r_sum = 0.0;
    std::size_t sys_n = 0, all_n = 0;
    for (const auto& [g, sc] : s) {
      const double deleted = std::max(sc - lookup(o, g), 0.0);
      const double rc = lookup(r, g);
      const double all = std::max(sc - rc, 0.0);
      const double good = std::max(deleted - rc, 0.0);
      if (all > 0.0) {
        ++all_n;
        r_sum += good / all;
      }
      if (deleted > 0.0) {
        ++sys_n;
        p_sum += good / deleted;
      }
    }
    const double p = sys_n ? p_sum / sys_n : 0.0;
    const double rc = all_n ? r_sum / all_n : 0.0;
    out.del = finish(sys_n == 0, all_n == 0, p, rc);
  }
  return out;
}

bool is_vowel(char c) {
  switch (c) {
    case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
    default: return false;
  }
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

SariBreakdown sari(std::span<const std::string> source, std::span<const std::string> output,
                   std::span<const Tokens> references, const SariOptions& options) {
  require(!references.empty(), ErrorKind::kContract, "SARI needs at least one reference");
  SariBreakdown b;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto scores = score_order(source, output, references, n);
    if (options.deletion_precision_only) scores.del.f1 = scores.del.precision;
    b.add[n - 1] = scores.add;
    b.del[n - 1] = scores.del;
    b.keep[n - 1] = scores.keep;
    b.f_add += scores.add.f1;
    b.f_delete += scores.del.f1;
    b.f_keep += scores.keep.f1;
  }
  b.f_add *= 100.0 / 4.0;
  b.f_delete *= 100.0 / 4.0;
  b.f_keep *= 100.0 / 4.0;
  b.sari = (b.f_add + b.f_delete + b.f_keep) / 3.0;
  return b;
}

SariBreakdown corpus_sari(std::span<const Tokens> sources, std::span<const Tokens> outputs,
                          std::span<const std::vector<Tokens>> references,
                          const SariOptions& options) {
  require(!sources.empty(), ErrorKind::kContract, "SARI over an empty corpus");
  require(sources.size() == outputs.size() && sources.size() == references.size(),
          ErrorKind::kAlignment,
          "SARI inputs disagree: " + std::to_string(sources.size()) + " sources, " +
              std::to_string(outputs.size()) + " outputs, " + std::to_string(references.size()) +
              " reference sets");
  SariBreakdown total;
  const double m = static_cast<double>(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto b = sari(sources[i], outputs[i], references[i], options);
    total.sari += b.sari / m;
    total.f_add += b.f_add / m;
    total.f_delete += b.f_delete / m;
    total.f_keep += b.f_keep / m;
    for (std::size_t n = 0; n < 4; ++n) {
      auto acc = [m](OperationScore& t, const OperationScore& s) {
        t.precision += s.precision / m;
        t.recall += s.recall / m;
        t.f1 += s.f1 / m;
      };
      acc(total.add[n], b.add[n]);
      acc(total.del[n], b.del[n]);
      acc(total.keep[n], b.keep[n]);
    }
  }
  return total;
}

std::size_t count_syllables(std::string_view word) {
  if (is_placeholder(word)) return 1;
  std::string w;
  for (char c : word) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (w.empty()) return 1;
  std::size_t groups = 0;
  std::size_t last_group_start = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (is_vowel(w[i]) && (i == 0 || !is_vowel(w[i - 1]))) {
      ++groups;
      last_group_start = i;
    }
  }
  // Terminal silent 'e': the last vowel group is a lone final 'e'.
  if (groups > 1 && w.back() == 'e' && last_group_start == w.size() - 1) --groups;
  return std::max<std::size_t>(groups, 1);
}

ReadabilityReport fkgl(std::span<const Tokens> sentences) {
  require(!sentences.empty(), ErrorKind::kContract, "FKGL over an empty corpus");
  std::size_t words = 0, syllables = 0;
  for (const auto& s : sentences) {
    words += s.size();
    for (const auto& w : s) syllables += count_syllables(w);
  }
  require(words > 0, ErrorKind::kContract, "FKGL over a corpus without words");
  ReadabilityReport r;
  r.slen = static_cast<double>(words) / static_cast<double>(sentences.size());
  r.wlen = static_cast<double>(syllables) / static_cast<double>(words);
  r.fkgl = fkgl_formula(r.slen, r.wlen);
  return r;
}

RuleUtilReport rule_utilization(std::span<const Tokens> sources, std::span<const Tokens> outputs,
                                std::span<const std::vector<Tokens>> references,
                                const RuleIndex& index) {
  require(sources.size() == outputs.size() && sources.size() == references.size(),
          ErrorKind::kAlignment, "rule utilization inputs are not aligned");
  RuleUtilReport report;
  std::size_t overlap = 0, applied = 0, correct = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::set<RuleId> c, a;
    for (const auto& ref : references[i])
      for (const auto& m : index.applied_rules(sources[i], ref)) c.insert(rule_id(*m.rule));
    for (const auto& m : index.applied_rules(sources[i], outputs[i])) a.insert(rule_id(*m.rule));
    RuleUtilCounts counts;
    counts.correct = c.size();
    counts.applied = a.size();
    for (const auto& id : a) counts.overlap += c.contains(id);
    overlap += counts.overlap;
    applied += counts.applied;
    correct += counts.correct;
    report.sentences.push_back(counts);
  }
  report.precision = applied ? static_cast<double>(overlap) / applied : 0.0;
  report.recall = correct ? static_cast<double>(overlap) / correct : 0.0;
  report.f1 = report.precision > 0.0 && report.recall > 0.0
                  ? 2.0 * report.precision * report.recall / (report.precision + report.recall)
                  : 0.0;
  return report;
}

EvalReport evaluate_corpus(std::string system, std::span<const Tokens> sources,
                           std::span<const Tokens> outputs,
                           std::span<const std::vector<Tokens>> references,
                           const RuleIndex* index, const SariOptions& options) {
  EvalReport report;
  report.system = std::move(system);
  report.readability = fkgl(outputs);
  report.sari = corpus_sari(sources, outputs, references, options);
  if (index) report.rules = rule_utilization(sources, outputs, references, *index);
  return report;
}

std::string report_tsv_header() {
  return "system\tFKGL\tWLen\tSLen\tSARI\tAdd\tDelete\tKeep\tPrec\tRecall\tF1";
}

std::string report_tsv_row(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.system << '\t' << r.readability.fkgl << '\t' << r.readability.wlen << '\t'
      << r.readability.slen << '\t' << r.sari.sari << '\t' << r.sari.f_add << '\t'
      << r.sari.f_delete << '\t' << r.sari.f_keep << '\t' << 100.0 * r.rules.precision << '\t'
      << 100.0 * r.rules.recall << '\t' << 100.0 * r.rules.f1;
  return out.str();
}

std::string report_table(std::span<const EvalReport> reports) {
  const std::vector<std::string> header = {"Model", "FKGL", "WLen", "SLen", "SARI", "Add",
                                           "Delete", "Keep", "Prec", "Recall", "F1"};
  std::vector<std::vector<std::string>> rows{header};
  for (const auto& r : reports) {
    rows.push_back({r.system, format_fixed(r.readability.fkgl), format_fixed(r.readability.wlen),
                    format_fixed(r.readability.slen), format_fixed(r.sari.sari),
                    format_fixed(r.sari.f_add), format_fixed(r.sari.f_delete),
                    format_fixed(r.sari.f_keep), format_fixed(100.0 * r.rules.precision),
                    format_fixed(100.0 * r.rules.recall), format_fixed(100.0 * r.rules.f1)});
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      if (i == 0) {
        out << rows[r][i] << std::string(widths[i] - rows[r][i].size(), ' ');
      } else {
        out << "  " << std::string(widths[i] - rows[r][i].size(), ' ') << rows[r][i];
      }
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace kas
