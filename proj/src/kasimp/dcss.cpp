#include "kasimp/dcss.hpp"

#include "kasimp/error.hpp"

namespace kas {

CriticAlignment align_critic_terms(const SentencePair& pair, std::span<const RuleMatch> matches,
                                   const Vocabulary& vocab) {
  CriticAlignment out;
  for (const auto& m : matches) {
    if (!m.target_position) continue;
    if (m.rule->simple.size() != 1) {
      ++out.skipped_multi_token;
      continue;
    }
    const std::size_t step = *m.target_position;
    if (step >= pair.simple.size()) continue;
    CriticTerm term;
    term.step = step;
    term.rule = m.rule;
    term.normal_id = vocab.id(m.rule->normal.front());
    term.simple_id = vocab.id(m.rule->simple.front());
    term.weight = m.rule->weight;
    if (term.normal_id == term.simple_id) {
      ++out.skipped_same_id;
      continue;
    }
    out.terms.push_back(term);
  }
  return out;
}

std::vector<CriticCase> critic_gates(const Tensor& logits, std::span<const CriticTerm> terms,
                                     bool extend_case1) {
  std::vector<CriticCase> gates;
  gates.reserve(terms.size());
  const std::size_t v = logits.cols();
  for (const auto& t : terms) {
    require(t.step < logits.rows(), ErrorKind::kContract,
            "critic term step " + std::to_string(t.step) + " outside " +
                std::to_string(logits.rows()) + " decoded steps");
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j) {
      if (logits.at(t.step, j) > logits.at(t.step, best)) best = j;
    }
    const int g = static_cast<int>(best);
    if (g == t.simple_id) {
      gates.push_back(CriticCase::kGeneratedSimple);
    } else if (g == t.normal_id || extend_case1) {
      gates.push_back(CriticCase::kGeneratedNormal);
    } else {
      gates.push_back(CriticCase::kNone);
    }
  }
  return gates;
}

Tensor critic_loss(const Tensor& logits, std::span<const CriticTerm> terms,
                   std::span<const CriticCase> gates) {
  require(gates.size() == terms.size(), ErrorKind::kContract, "one gate per critic term needed");
  std::vector<Tensor> parts;
  Tensor log_probs;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (gates[i] == CriticCase::kNone) continue;
    if (!log_probs.defined()) log_probs = log_softmax(logits);
    const auto& t = terms[i];
    if (gates[i] == CriticCase::kGeneratedNormal) {
      parts.push_back(scale(pick(log_probs, t.step, t.simple_id), -t.weight));
    } else {
      parts.push_back(scale(pick(log_probs, t.step, t.normal_id), t.weight));
    }
  }
  if (parts.empty()) return Tensor::scalar(0.0);
  return parts.size() == 1 ? parts.front() : sum(concat_rows(parts));
}

Tensor critic_loss(const Tensor& logits, std::span<const CriticTerm> terms, bool extend_case1) {
  const auto gates = critic_gates(logits, terms, extend_case1);
  return critic_loss(logits, terms, gates);
}

}  // namespace kas
