#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "kasimp/corpus.hpp"
#include "kasimp/dmass.hpp"
#include "kasimp/transformer.hpp"

namespace kas {

// Next-token log-probabilities for one source sentence.
class NextTokenScorer {
 public:
  virtual ~NextTokenScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> log_probs(std::span<const int> prefix) = 0;
};

// Plain transformer scoring; the source is encoded once.
class TransformerScorer : public NextTokenScorer {
 public:
  TransformerScorer(const Transformer& model, std::span<const int> source);
  std::size_t vocab_size() const override;
  std::vector<double> log_probs(std::span<const int> prefix) override;

 private:
  const Transformer& model_;
  EncoderState encoder_;
};

// Memory-augmented scoring: every step reads the slots of the rules whose
// normal side occurs in the source.
class MemoryScorer : public NextTokenScorer {
 public:
  MemoryScorer(const Transformer& model, const RuleMemory& memory, const RuleIndex& index,
               std::span<const std::string> source_tokens, std::span<const int> source_ids);
  std::size_t vocab_size() const override;
  std::vector<double> log_probs(std::span<const int> prefix) override;

  // Memory weights of the most recent step (empty without candidates).
  const std::vector<double>& last_weights() const { return last_weights_; }
  std::size_t candidate_count() const { return candidates_.size(); }

 private:
  const Transformer& model_;
  EncoderState encoder_;
  std::vector<const MemorySlot*> candidates_;
  std::vector<double> last_weights_;
};

struct Hypothesis {
  // BOS-prefixed; ends with EOS iff finished.
  std::vector<int> tokens;
  double log_prob = 0.0;
  bool finished = false;
  // Decoding step at which the hypothesis ended.
  std::size_t length = 0;
};

struct DecodeOptions {
  // Maximum generated tokens, EOS included.
  std::size_t max_len = 20;
  std::size_t beam_size = 1;
  // Rank final hypotheses by log_prob / length.
  bool length_normalize = false;
  int bos = Vocabulary::kBos;
  int eos = Vocabulary::kEos;
};

Hypothesis greedy_decode(NextTokenScorer& scorer, const DecodeOptions& options);

// Standard beam search over summed log-probabilities. Finished hypotheses are
// set aside; at most beam_size results come back, best first. Ties go to the
// earlier-finishing hypothesis, then to the lexicographically smaller ids.
std::vector<Hypothesis> beam_decode(NextTokenScorer& scorer, const DecodeOptions& options);

// Generated ids without BOS and EOS.
std::vector<int> output_ids(const Hypothesis& h, int bos = Vocabulary::kBos,
                            int eos = Vocabulary::kEos);

// Default generation budget for a source of n tokens.
inline std::size_t default_max_len(std::size_t source_tokens) { return source_tokens + 10; }

}  // namespace kas
