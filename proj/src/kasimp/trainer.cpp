#include "kasimp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "kasimp/error.hpp"
#include "kasimp/log.hpp"

namespace kas {

namespace {

constexpr std::uint64_t kStreamSalt = 0x9e3779b97f4a7c15ULL;

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<TrainingExample> prepare_examples(std::span<const SentencePair> pairs,
                                              const Vocabulary& vocab, const RuleIndex* index) {
  std::vector<TrainingExample> out;
  out.reserve(pairs.size());
  for (const auto& pair : pairs) {
    TrainingExample ex;
    ex.pair = pair;
    ex.ids.source = vocab.encode(pair.normal);
    ex.ids.target = vocab.encode(pair.simple);
    if (index) {
      ex.applied = index->applied_rules(pair.normal, pair.simple);
      ex.critic = align_critic_terms(pair, ex.applied, vocab);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

const char* phase_name(Phase phase) { return phase == Phase::kSequence ? "seq" : "critic"; }

std::string format_step_log(const StepLog& log) {
  return std::to_string(log.step) + "\t" + phase_name(log.phase) + "\t" + number(log.loss) + "\t" +
         std::to_string(log.critic_terms) + "\t" + std::to_string(log.skipped_multi_token) + "\t" +
         number(log.grad_norm) + "\t" + (log.updated ? "update" : "skip");
}

Trainer::Trainer(RunConfig config, const Vocabulary& vocab, std::vector<TrainingExample> examples,
                 const RuleIndex* index)
    : config_(std::move(config)),
      vocab_(vocab),
      index_(index),
      examples_(std::move(examples)),
      memory_(config_.model.d_model, config_.slots_per_rule),
      rng_(config_.seed ^ kStreamSalt) {
  config_.model.vocab_size = vocab.size();
  config_.validate();
  config_.model.validate();
  require(!examples_.empty(), ErrorKind::kCorpus, "no training pairs");
  require(index_ != nullptr || (!uses_memory(config_.model.mode) && !uses_critic(config_.model.mode)),
          ErrorKind::kConfig,
          std::string("mode ") + mode_name(config_.model.mode) + " needs a rulebase");
  model_ = std::make_unique<Transformer>(config_.model, config_.seed);
  optimizer_ = std::make_unique<Adagrad>(model_->params().tensors(), config_.learning_rate,
                                         config_.adagrad_initial_accumulator);
  order_.resize(examples_.size());
  std::iota(order_.begin(), order_.end(), 0);
  rng_.shuffle(order_);
}

Phase Trainer::next_phase() const {
  if (!uses_critic(config_.model.mode)) return Phase::kSequence;
  const std::size_t cycle = config_.critic_schedule + 1;
  return step_ % cycle == config_.critic_schedule ? Phase::kCritic : Phase::kSequence;
}

std::vector<std::size_t> Trainer::next_batch() {
  std::vector<std::size_t> batch;
  batch.reserve(config_.batch_size);
  while (batch.size() < config_.batch_size) {
    if (cursor_ == order_.size()) {
      std::iota(order_.begin(), order_.end(), 0);
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

Trainer::Forward Trainer::forward(const TrainingExample& example, bool training) {
  Rng* rng = training ? &rng_ : nullptr;
  Forward f;
  const auto encoder = model_->encode(example.ids.source, training, rng);
  const auto input = teacher_forcing_input(example.ids.target);
  if (uses_memory(config_.model.mode)) {
    const auto candidates = memory_candidates(memory_, *index_, example.pair.normal);
    auto m = memory_forward(*model_, input, encoder, candidates, training, rng);
    f.logits = m.logits;
    f.decoder = std::move(m.decoder);
    f.combined = m.combined;
    f.candidates = candidates.size();
  } else {
    f.decoder = model_->decode(input, encoder, training, rng);
    f.logits = model_->project(f.decoder.top());
  }
  return f;
}

void Trainer::update_memory(const TrainingExample& example, const Forward& f) {
  const std::size_t d = config_.model.d_model;
  const Tensor& query = f.decoder.contexts.at(config_.model.memory_layer - 1);
  for (const auto& match : example.applied) {
    if (!match.target_position) continue;
    const std::size_t s = *match.target_position;
    if (s >= query.rows()) continue;
    const auto q = query.data().subspan(s * d, d);
    const auto v = f.combined.data().subspan(s * d, d);
    memory_.update(rule_id(*match.rule), q, v);
  }
}

StepLog Trainer::step() {
  StepLog log;
  log.phase = next_phase();
  const auto batch = next_batch();
  optimizer_->zero_grad();

  std::vector<Forward> forwards;
  forwards.reserve(batch.size());
  Tensor total;
  for (std::size_t idx : batch) {
    const auto& ex = examples_[idx];
    Forward f = forward(ex, true);
    Tensor loss;
    if (log.phase == Phase::kSequence) {
      loss = cross_entropy(f.logits, ex.ids.target);
    } else {
      log.skipped_multi_token += ex.critic.skipped_multi_token;
      const auto gates = critic_gates(f.logits, ex.critic.terms, config_.critic_extend_case1);
      const auto firing = static_cast<std::size_t>(
          std::count_if(gates.begin(), gates.end(),
                        [](CriticCase c) { return c != CriticCase::kNone; }));
      log.critic_terms += firing;
      if (firing > 0) loss = critic_loss(f.logits, ex.critic.terms, gates);
    }
    if (loss.defined()) total = total.defined() ? add(total, loss) : loss;
    forwards.push_back(std::move(f));
  }

  ++step_;
  log.step = step_;
  if (!total.defined()) {
    log.updated = false;
  } else {
    const Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
    log.loss = loss.item();
    if (!std::isfinite(log.loss)) return log;
    loss.backward();
    auto params = optimizer_->params();
    log.grad_norm = config_.clip_mode == ClipMode::kGlobalNorm
                        ? clip_global_norm(params, config_.clip_threshold)
                        : clip_values(params, config_.clip_threshold);
    optimizer_->step();
  }

  if (uses_memory(config_.model.mode)) {
    for (std::size_t i = 0; i < batch.size(); ++i) update_memory(examples_[batch[i]], forwards[i]);
  }
  return log;
}

std::vector<StepLog> Trainer::train(const ValidationSet* validation) {
  std::ofstream log_file;
  if (!config_.log.empty()) {
    log_file.open(config_.log, std::ios::trunc);
    require(log_file.good(), ErrorKind::kIo, "cannot write training log " + config_.log);
    log_file << "# build " << build_id() << "\n";
    log_file << "step\tphase\tloss\tcritic_terms\tskipped_multi_token\tgrad_norm\tstatus\n";
  }
  std::vector<StepLog> logs;
  const std::size_t target = config_.steps;
  while (step_ < target) {
    const StepLog log = step();
    if (!std::isfinite(log.loss)) {
      const std::string msg = "non-finite loss at step " + std::to_string(log.step) +
                              (config_.checkpoint.empty()
                                   ? std::string()
                                   : "; last good checkpoint kept at " + config_.checkpoint);
      log_warning(msg);
      fail(ErrorKind::kNumeric, msg);
    }
    logs.push_back(log);
    if (log_file.is_open()) log_file << format_step_log(log) << "\n";
    log_info(format_step_log(log));

    if (!config_.checkpoint.empty() && config_.checkpoint_interval > 0 &&
        step_ % config_.checkpoint_interval == 0) {
      save(config_.checkpoint);
    }
    if (validation && config_.eval_interval > 0 && step_ % config_.eval_interval == 0) {
      const double score = validation_sari(*validation);
      const std::string line = "# step " + std::to_string(step_) + " valid_sari " + number(score);
      if (log_file.is_open()) log_file << line << "\n";
      log_info(line);
      if (score > best_score_) {
        best_score_ = score;
        if (!config_.checkpoint.empty()) save(config_.checkpoint + ".best");
      }
    }
  }
  if (!config_.checkpoint.empty()) save(config_.checkpoint);
  return logs;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.model = model_->config();
  c.params = model_->params().named();
  for (auto& [name, t] : c.params) t = t.clone();
  c.accumulators = optimizer_->accumulators();
  c.rng_state = rng_.state();
  c.step = step_;
  c.best_score = best_score_;
  c.data_order.assign(order_.begin(), order_.end());
  c.data_cursor = cursor_;
  return c;
}

void Trainer::restore(const Checkpoint& checkpoint) {
  restore_params(checkpoint, model_->params());
  if (!checkpoint.accumulators.empty()) optimizer_->set_accumulators(checkpoint.accumulators);
  rng_.restore(checkpoint.rng_state);
  step_ = checkpoint.step;
  best_score_ = checkpoint.best_score;
  if (checkpoint.data_order.size() == order_.size()) {
    order_.assign(checkpoint.data_order.begin(), checkpoint.data_order.end());
    cursor_ = std::min<std::size_t>(checkpoint.data_cursor, order_.size());
  }
}

void Trainer::save(const std::string& path) const {
  checkpoint().save(path);
  if (uses_memory(config_.model.mode)) memory_.save(memory_path(path));
}

double Trainer::token_accuracy(std::span<const TrainingExample> examples) const {
  NoGradGuard guard;
  auto& self = const_cast<Trainer&>(*this);
  std::size_t correct = 0, total = 0;
  for (const auto& ex : examples) {
    const auto f = self.forward(ex, false);
    const std::size_t v = f.logits.cols();
    for (std::size_t s = 0; s < ex.ids.target.size(); ++s) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < v; ++j) {
        if (f.logits.at(s, j) > f.logits.at(s, best)) best = j;
      }
      correct += static_cast<int>(best) == ex.ids.target[s];
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double Trainer::validation_sari(const ValidationSet& validation) const {
  const bool memory = uses_memory(config_.model.mode);
  std::vector<Tokens> outputs;
  outputs.reserve(validation.sources.size());
  for (const auto& source : validation.sources) {
    outputs.push_back(decode_sentence(*model_, vocab_, memory ? &memory_ : nullptr,
                                      memory ? index_ : nullptr, source, config_));
  }
  SariOptions options;
  options.deletion_precision_only = config_.deletion_precision_only;
  return corpus_sari(validation.sources, outputs, validation.references, options).sari;
}

Tokens decode_sentence(const Transformer& model, const Vocabulary& vocab,
                       const RuleMemory* memory, const RuleIndex* index,
                       std::span<const std::string> source, const RunConfig& config,
                       double* score) {
  const std::size_t limit = model.config().max_length;
  const auto tokens = source.subspan(0, std::min(source.size(), limit));
  const auto ids = vocab.encode(tokens);

  std::unique_ptr<NextTokenScorer> scorer;
  if (uses_memory(model.config().mode)) {
    require(memory != nullptr && index != nullptr, ErrorKind::kConfig,
            "memory modes decode with a rule memory and a rulebase");
    scorer = std::make_unique<MemoryScorer>(model, *memory, *index, tokens, ids);
  } else {
    scorer = std::make_unique<TransformerScorer>(model, ids);
  }

  DecodeOptions options;
  options.max_len = std::min(tokens.size() + config.max_decode_extra, limit);
  options.max_len = std::max<std::size_t>(options.max_len, 1);
  options.beam_size = config.beam_size;
  options.length_normalize = config.length_normalize;

  Hypothesis best;
  if (config.beam_size <= 1) {
    best = greedy_decode(*scorer, options);
  } else {
    best = beam_decode(*scorer, options).front();
  }
  if (score) *score = best.log_prob;
  return vocab.decode(output_ids(best));
}

}  // namespace kas
