#include "kasimp/decode.hpp"

#include <algorithm>

#include "kasimp/error.hpp"
#include "kasimp/log.hpp"

namespace kas {

namespace {

std::vector<double> row_log_probs(const Tensor& logits) {
  const Tensor lp = log_softmax(logits);
  const std::size_t v = lp.cols();
  const auto data = lp.data();
  return {data.end() - static_cast<std::ptrdiff_t>(v), data.end()};
}

bool better(const Hypothesis& a, const Hypothesis& b, bool normalize) {
  const double sa = normalize ? a.log_prob / static_cast<double>(std::max<std::size_t>(a.length, 1))
                              : a.log_prob;
  const double sb = normalize ? b.log_prob / static_cast<double>(std::max<std::size_t>(b.length, 1))
                              : b.log_prob;
  if (sa != sb) return sa > sb;
  if (a.length != b.length) return a.length < b.length;
  return a.tokens < b.tokens;
}

}  // namespace

TransformerScorer::TransformerScorer(const Transformer& model, std::span<const int> source)
    : model_(model) {
  NoGradGuard guard;
  encoder_ = model_.encode(source, false, nullptr);
}

std::size_t TransformerScorer::vocab_size() const { return model_.config().vocab_size; }

std::vector<double> TransformerScorer::log_probs(std::span<const int> prefix) {
  NoGradGuard guard;
  return row_log_probs(model_.next_logits(prefix, encoder_));
}

MemoryScorer::MemoryScorer(const Transformer& model, const RuleMemory& memory,
                           const RuleIndex& index, std::span<const std::string> source_tokens,
                           std::span<const int> source_ids)
    : model_(model) {
  NoGradGuard guard;
  encoder_ = model_.encode(source_ids, false, nullptr);
  candidates_ = memory_candidates(memory, index, source_tokens);
}

std::size_t MemoryScorer::vocab_size() const { return model_.config().vocab_size; }

std::vector<double> MemoryScorer::log_probs(std::span<const int> prefix) {
  NoGradGuard guard;
  auto forward = memory_forward(model_, prefix, encoder_, candidates_, false, nullptr);
  const std::size_t c = candidates_.size();
  if (c > 0) {
    const auto& w = forward.read.weights;
    last_weights_.assign(w.end() - static_cast<std::ptrdiff_t>(c), w.end());
  } else {
    last_weights_.clear();
  }
  return row_log_probs(forward.logits);
}

Hypothesis greedy_decode(NextTokenScorer& scorer, const DecodeOptions& options) {
  require(options.max_len >= 1, ErrorKind::kContract, "max_len must be at least 1");
  Hypothesis h;
  h.tokens = {options.bos};
  for (std::size_t step = 0; step < options.max_len; ++step) {
    const auto lp = scorer.log_probs(h.tokens);
    const auto best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    h.tokens.push_back(best);
    h.log_prob += lp[best];
    h.length = step + 1;
    if (best == options.eos) {
      h.finished = true;
      return h;
    }
  }
  log_info("decoding stopped at max_len=" + std::to_string(options.max_len));
  return h;
}

std::vector<Hypothesis> beam_decode(NextTokenScorer& scorer, const DecodeOptions& options) {
  require(options.beam_size >= 1, ErrorKind::kContract, "beam size must be at least 1");
  require(options.max_len >= 1, ErrorKind::kContract, "max_len must be at least 1");
  std::vector<Hypothesis> live{{{options.bos}, 0.0, false, 0}};
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> expansions;
    for (const auto& h : live) {
      const auto lp = scorer.log_probs(h.tokens);
      for (std::size_t t = 0; t < lp.size(); ++t) {
        Hypothesis next = h;
        next.tokens.push_back(static_cast<int>(t));
        next.log_prob += lp[t];
        next.length = step + 1;
        next.finished = static_cast<int>(t) == options.eos;
        expansions.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min(options.beam_size, expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + keep, expansions.end(),
                      [](const Hypothesis& a, const Hypothesis& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        return a.tokens < b.tokens;
                      });
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (expansions[i].finished) {
        finished.push_back(std::move(expansions[i]));
      } else {
        live.push_back(std::move(expansions[i]));
      }
    }
  }
  // Hypotheses still open at max_len compete as truncated outputs.
  for (auto& h : live) finished.push_back(std::move(h));
  std::sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    return better(a, b, options.length_normalize);
  });
  if (finished.size() > options.beam_size) finished.resize(options.beam_size);
  return finished;
}

std::vector<int> output_ids(const Hypothesis& h, int bos, int eos) {
  auto first = h.tokens.begin();
  auto last = h.tokens.end();
  if (first != last && *first == bos) ++first;
  if (first != last && *(last - 1) == eos) --last;
  return {first, last};
}

}  // namespace kas
