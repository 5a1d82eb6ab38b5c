#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kasimp/config.hpp"
#include "kasimp/metrics.hpp"
#include "kasimp/trainer.hpp"

namespace kas {

struct PreprocessRequest {
  std::string normal;
  std::string simple;
  // Optional entity sidecars for each side.
  std::string normal_entities;
  std::string simple_entities;
  std::string out_dir;
  // Output files are <out_dir>/<prefix>.normal, .simple and .entities.
  std::string prefix = "train";
  // Existing vocabulary to encode against; when empty one is built from
  // this corpus and written to <out_dir>/vocab.tsv.
  std::string vocab;
};

struct PreprocessStats {
  std::size_t pairs = 0;
  std::size_t vocab_size = 0;
  std::size_t tokens = 0;
  std::size_t unk_tokens = 0;
  double unk_rate = 0.0;
  std::size_t truncated = 0;
  std::size_t entities = 0;
};

std::string format_preprocess_stats(const PreprocessStats& stats);

PreprocessStats run_preprocess(const RunConfig& config, const PreprocessRequest& request);

struct TrainSummary {
  std::size_t steps = 0;
  double final_loss = 0.0;
  double token_accuracy = 0.0;
  std::size_t memory_rules = 0;
  std::vector<StepLog> logs;
};

std::string format_train_summary(const TrainSummary& summary);

// Trains from config.train_normal / config.train_simple. The vocabulary is read
// from config.vocab when that file exists, built otherwise (and saved there if
// the path is set).
TrainSummary run_train(const RunConfig& config);

// A trained model ready for decoding: checkpoint, vocabulary and, in memory
// modes, the rule memory and rulebase.
struct DecodingModel {
  Vocabulary vocab;
  std::unique_ptr<Transformer> model;
  std::unique_ptr<RuleIndex> index;
  std::optional<RuleMemory> memory;
  RunConfig config;

  // Reads config.checkpoint and config.vocab. Memory modes need the memory
  // file next to the checkpoint and config.rulebase.
  static DecodingModel load(const RunConfig& config);

  Tokens decode(std::span<const std::string> source, const EntityMap* entities = nullptr) const;
};

// Decodes one sentence per input line with the checkpoint in config.checkpoint;
// entity maps, when given, restore placeholders line by line.
std::vector<std::string> run_decode(const RunConfig& config, const std::string& input,
                                    const std::string& entities = {});

struct SystemOutput {
  std::string name;
  std::string path;
};

std::vector<EvalReport> run_evaluate(const RunConfig& config, const std::string& source,
                                     std::span<const SystemOutput> systems,
                                     std::span<const std::string> references);

struct AblationGrid {
  std::vector<std::size_t> layers{1, 2};
  std::vector<std::size_t> heads{1, 2};
  std::vector<std::size_t> beams{1};
};

// Trains one model per (layers, heads) cell with the shared seed and scores it
// on the validation set for every beam size.
std::vector<EvalReport> run_ablation(const RunConfig& config, const AblationGrid& grid);

// TSV with a comment header holding the build identifier and the full config.
std::string render_report_tsv(const RunConfig& config, std::span<const EvalReport> reports);
std::string render_report_table(const RunConfig& config, std::span<const EvalReport> reports);

// Writes <output>.tsv and <output>.txt when config.output is set.
void write_reports(const RunConfig& config, std::span<const EvalReport> reports);

}  // namespace kas
