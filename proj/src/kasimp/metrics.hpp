#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kasimp/corpus.hpp"
#include "kasimp/rulebase.hpp"

namespace kas {

// --- SARI -------------------------------------------------------------------------
//
// For n = 1..4, with k references, S/O the source/output n-gram counts and R
// the reference counts summed over references (so R/k is a fractional count):
//
//   add:    system set  = {g : O(g) > 0, S(g) = 0}
//           reference   = {g : R(g) > 0, S(g) = 0}, scored as sets.
//   keep:   system      = min(kS, kO) over shared n-grams
//           good        = min(system, R), all = min(kS, R)
//           P = mean over system n-grams of good/system, R = sum good / sum all
//   delete: system      = max(kS - kO, 0), good = max(system - R, 0),
//           all         = max(kS - R, 0)
//           P = mean over system n-grams of good/system,
//           R = mean over `all` n-grams of good/all
//
// When an operation has neither system nor reference n-grams for some n, its
// precision and recall are 1 for that n. When exactly one side is empty its F1
// is 0. Each operation score is the mean of its per-n F1 (x100) and SARI is the
// mean of the three operation scores.

struct OperationScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct SariBreakdown {
  double sari = 0.0;
  double f_add = 0.0;
  double f_delete = 0.0;
  double f_keep = 0.0;
  // Index n-1 holds the n-gram components.
  std::array<OperationScore, 4> add{};
  std::array<OperationScore, 4> del{};
  std::array<OperationScore, 4> keep{};
};

struct SariOptions {
  // Score deletion by precision alone, as in the original SARI release.
  bool deletion_precision_only = false;
};

SariBreakdown sari(std::span<const std::string> source, std::span<const std::string> output,
                   std::span<const Tokens> references, const SariOptions& options = {});

// Mean of sentence-level scores, component by component.
SariBreakdown corpus_sari(std::span<const Tokens> sources, std::span<const Tokens> outputs,
                          std::span<const std::vector<Tokens>> references,
                          const SariOptions& options = {});

// --- FKGL -------------------------------------------------------------------------

struct ReadabilityReport {
  double fkgl = 0.0;
  // Average syllables per word.
  double wlen = 0.0;
  // Average words per sentence.
  double slen = 0.0;
};

// Vowel-group heuristic: maximal runs of a/e/i/o/u/y, minus one for a terminal
// silent 'e' when another vowel group exists, at least 1. Tokens without
// letters and NE placeholders count as one syllable.
std::size_t count_syllables(std::string_view word);

// fkgl = 0.39 * slen + 11.8 * wlen - 15.59
ReadabilityReport fkgl(std::span<const Tokens> sentences);

inline double fkgl_formula(double slen, double wlen) { return 0.39 * slen + 11.8 * wlen - 15.59; }

// --- rule utilization ---------------------------------------------------------------

struct RuleUtilCounts {
  std::size_t correct = 0;  // |C|
  std::size_t applied = 0;  // |A|
  std::size_t overlap = 0;  // |A and C|
};

struct RuleUtilReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<RuleUtilCounts> sentences;
};

// Per sentence, C = union over references of the rules applied by that
// reference and A = the rules applied by the output; micro-averaged.
RuleUtilReport rule_utilization(std::span<const Tokens> sources, std::span<const Tokens> outputs,
                                std::span<const std::vector<Tokens>> references,
                                const RuleIndex& index);

// --- report -----------------------------------------------------------------------

struct EvalReport {
  std::string system;
  ReadabilityReport readability;
  SariBreakdown sari;
  RuleUtilReport rules;
};

EvalReport evaluate_corpus(std::string system, std::span<const Tokens> sources,
                           std::span<const Tokens> outputs,
                           std::span<const std::vector<Tokens>> references,
                           const RuleIndex* index, const SariOptions& options = {});

// Columns: system, FKGL, WLen, SLen, SARI, Add, Delete, Keep, Prec, Recall, F1.
std::string report_tsv_header();
std::string report_tsv_row(const EvalReport& report);
std::string report_table(std::span<const EvalReport> reports);

}  // namespace kas
