#pragma once

// Augmented rule memory: one key/value slot per paraphrase rule. Keys are
// decoder context vectors observed when the rule was applied, values are the
// final output representations at that step. Reads are softmax-weighted over
// dot products with the current context; writes append or average.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kasimp/rulebase.hpp"
#include "kasimp/tensor.hpp"
#include "kasimp/transformer.hpp"

namespace kas {

struct MemorySlot {
  RuleId rule_id;
  std::vector<double> key;
  std::vector<double> value;
  std::size_t update_count = 1;

  friend bool operator==(const MemorySlot&, const MemorySlot&) = default;
};

class RuleMemory {
 public:
  // slots_per_rule > 1 keeps several key/value pairs per rule; once full, an
  // update averages into the slot whose key is nearest to the query.
  explicit RuleMemory(std::size_t dim = 0, std::size_t slots_per_rule = 1);

  std::size_t dim() const { return dim_; }
  std::size_t slots_per_rule() const { return slots_per_rule_; }
  std::size_t rule_count() const { return slots_.size(); }
  std::size_t slot_count() const;
  bool contains(const RuleId& id) const { return slots_.contains(id); }
  std::span<const MemorySlot> slots(const RuleId& id) const;
  const std::map<RuleId, std::vector<MemorySlot>>& all() const { return slots_; }

  // Absent rule: append {query, output}. Present: key <- (key + query) / 2 and
  // value <- (value + output) / 2.
  void update(const RuleId& id, std::span<const double> query, std::span<const double> output);

  // Binary file: header, then per slot the rule id, update count, key, value.
  void save(const std::string& path) const;
  static RuleMemory load(const std::string& path);

  friend bool operator==(const RuleMemory&, const RuleMemory&) = default;

 private:
  std::size_t dim_;
  std::size_t slots_per_rule_;
  std::map<RuleId, std::vector<MemorySlot>> slots_;
};

struct MemoryReadResult {
  // [queries x candidates] attention weights, row-major.
  std::vector<double> weights;
  // [queries x dim] weighted sum of candidate values; zero without candidates.
  Tensor output;
  std::vector<const MemorySlot*> candidates;
};

// Reads the memory for every row of `queries` ([n x d]). Gradients flow into the
// queries only; stored keys and values are constants.
MemoryReadResult memory_read(const Tensor& queries, std::span<const MemorySlot* const> candidates);

// Slots of every rule whose normal side occurs in `source`, in candidate order,
// without duplicates. Rules never trained have no slot and are skipped.
std::vector<const MemorySlot*> memory_candidates(const RuleMemory& memory, const RuleIndex& index,
                                                 std::span<const std::string> source);

// Feed-forward combination of [decoder_top ; memory_output] -> d_model, then
// optionally y <- LayerNorm(decoder_top + y).
Tensor combine(const Tensor& decoder_top, const Tensor& memory_output,
               const CombinerParams& params, bool residual = false, bool normalize = false);

struct MemoryForward {
  DecoderState decoder;
  MemoryReadResult read;
  // Final output representation per step (input to the output projection).
  Tensor combined;
  Tensor logits;
};

// Decoder pass whose logits come from combine(top, memory_read(c_(s,j))).
MemoryForward memory_forward(const Transformer& model, std::span<const int> prefix,
                             const EncoderState& encoder,
                             std::span<const MemorySlot* const> candidates, bool training,
                             Rng* rng);

}  // namespace kas
