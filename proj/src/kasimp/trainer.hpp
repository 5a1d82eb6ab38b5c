#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kasimp/checkpoint.hpp"
#include "kasimp/config.hpp"
#include "kasimp/corpus.hpp"
#include "kasimp/dcss.hpp"
#include "kasimp/decode.hpp"
#include "kasimp/dmass.hpp"
#include "kasimp/metrics.hpp"
#include "kasimp/optimizer.hpp"
#include "kasimp/random.hpp"
#include "kasimp/rulebase.hpp"
#include "kasimp/transformer.hpp"

namespace kas {

struct TrainingExample {
  SentencePair pair;
  EncodedPair ids;
  std::vector<RuleMatch> applied;
  CriticAlignment critic;
};

// Encodes pairs and aligns rules; `index` may be null for base mode.
std::vector<TrainingExample> prepare_examples(std::span<const SentencePair> pairs,
                                              const Vocabulary& vocab, const RuleIndex* index);

enum class Phase { kSequence, kCritic };

const char* phase_name(Phase phase);

struct StepLog {
  std::size_t step = 0;
  Phase phase = Phase::kSequence;
  double loss = 0.0;
  std::size_t critic_terms = 0;
  std::size_t skipped_multi_token = 0;
  double grad_norm = 0.0;
  // False when a critic batch had no firing terms and no update was made.
  bool updated = true;
};

std::string format_step_log(const StepLog& log);

struct ValidationSet {
  std::vector<Tokens> sources;
  std::vector<std::vector<Tokens>> references;
};

class Trainer {
 public:
  // `vocab` and `index` must outlive the trainer.
  Trainer(RunConfig config, const Vocabulary& vocab, std::vector<TrainingExample> examples,
          const RuleIndex* index);

  // One optimizer step in the phase given by the schedule.
  StepLog step();

  // Runs config.steps steps (from the current step counter), with validation,
  // checkpointing and log output as configured. A non-finite loss aborts with
  // a numeric error; the last checkpoint written stays in place.
  std::vector<StepLog> train(const ValidationSet* validation = nullptr);

  Phase next_phase() const;
  std::size_t steps_done() const { return step_; }

  Transformer& model() { return *model_; }
  const Transformer& model() const { return *model_; }
  RuleMemory& memory() { return memory_; }
  const RuleMemory& memory() const { return memory_; }
  const RunConfig& config() const { return config_; }

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& checkpoint);
  // Writes the checkpoint and, in memory modes, the memory file next to it.
  void save(const std::string& path) const;

  // Teacher-forced argmax accuracy over every target token (EOS included).
  double token_accuracy(std::span<const TrainingExample> examples) const;
  double token_accuracy() const { return token_accuracy(examples_); }

  // Corpus SARI of greedy/beam outputs against the references.
  double validation_sari(const ValidationSet& validation) const;

 private:
  struct Forward {
    Tensor logits;
    DecoderState decoder;
    Tensor combined;
    std::size_t candidates = 0;
  };

  Forward forward(const TrainingExample& example, bool training);
  std::vector<std::size_t> next_batch();
  void update_memory(const TrainingExample& example, const Forward& forward);

  RunConfig config_;
  const Vocabulary& vocab_;
  const RuleIndex* index_;
  std::vector<TrainingExample> examples_;
  std::unique_ptr<Transformer> model_;
  std::unique_ptr<Adagrad> optimizer_;
  RuleMemory memory_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
  double best_score_ = -1.0;
};

// Decodes one tokenized source with the configured search.
Tokens decode_sentence(const Transformer& model, const Vocabulary& vocab,
                       const RuleMemory* memory, const RuleIndex* index,
                       std::span<const std::string> source, const RunConfig& config,
                       double* score = nullptr);

}  // namespace kas
