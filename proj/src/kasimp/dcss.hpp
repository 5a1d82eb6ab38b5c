#pragma once

// Critic loss over rule-aligned decoding steps.
//
// For each applied rule with a single-token simple side, the decoder step that
// emits the simple token is inspected under teacher forcing. If the step's
// argmax is the rule's normal token the loss adds -w * log P(simple); if the
// argmax is already the simple token it adds +w * log P(normal), so minimizing
// it drives P(normal) down. Any other argmax contributes nothing.

#include <cstddef>
#include <span>
#include <vector>

#include "kasimp/corpus.hpp"
#include "kasimp/rulebase.hpp"
#include "kasimp/tensor.hpp"

namespace kas {

struct CriticTerm {
  std::size_t step = 0;
  const Rule* rule = nullptr;
  int normal_id = 0;
  int simple_id = 0;
  double weight = 0.0;
};

struct CriticAlignment {
  std::vector<CriticTerm> terms;
  std::size_t skipped_multi_token = 0;
  // Rules whose two sides collapse to the same id (e.g. both UNK).
  std::size_t skipped_same_id = 0;
};

// `matches` are the applied rules of the pair (target positions set). The
// normal id is the first token of the rule's normal side.
CriticAlignment align_critic_terms(const SentencePair& pair, std::span<const RuleMatch> matches,
                                   const Vocabulary& vocab);

enum class CriticCase { kNone, kGeneratedNormal, kGeneratedSimple };

// Argmax decision per term. With `extend_case1`, any argmax other than the
// simple token counts as generating the normal token.
std::vector<CriticCase> critic_gates(const Tensor& logits, std::span<const CriticTerm> terms,
                                     bool extend_case1 = false);

// Loss with precomputed (frozen) gates.
Tensor critic_loss(const Tensor& logits, std::span<const CriticTerm> terms,
                   std::span<const CriticCase> gates);

Tensor critic_loss(const Tensor& logits, std::span<const CriticTerm> terms,
                   bool extend_case1 = false);

}  // namespace kas
