#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kasimp/transformer.hpp"

namespace kas {

enum class ClipMode { kGlobalNorm, kValue };

// Everything a run needs: Adagrad at 0.1 with accumulators starting at 0.1,
// global-norm clipping at 4, dropout 0.2, width 300, L=4, H=5, memory query
// layer 1, batches of 32.
struct RunConfig {
  ModelConfig model;

  // optimizer
  double learning_rate = 0.1;
  double adagrad_initial_accumulator = 0.1;
  double clip_threshold = 4.0;
  ClipMode clip_mode = ClipMode::kGlobalNorm;

  // schedule
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  std::uint64_t seed = 1;
  // Number of sequence-loss steps per critic step in critic modes.
  std::size_t critic_schedule = 1;
  bool critic_extend_case1 = false;
  std::size_t eval_interval = 0;
  std::size_t checkpoint_interval = 0;
  std::size_t slots_per_rule = 1;

  // data
  std::size_t min_count = 3;
  double min_rule_weight = 0.0;
  bool type_gating = false;

  // decoding
  std::size_t beam_size = 1;
  std::size_t max_decode_extra = 10;
  bool length_normalize = false;
  bool restore_entities = true;
  bool deletion_precision_only = false;

  // paths
  std::string data_dir;
  std::string train_normal;
  std::string train_simple;
  std::string valid_normal;
  std::vector<std::string> valid_refs;
  std::string vocab;
  std::string rulebase;
  std::string embeddings;
  std::string pos_lexicon;
  std::string checkpoint;
  std::string output;
  std::string log;

  // Sets one key from its text form (d_ff follows 4 * d_model until set
  // explicitly); unknown keys and bad values throw
  // configuration errors.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // Flat key=value lines; lines starting with '#' are comments.
  void load_file(const std::string& path);
  void load_text(std::string_view text);
  std::string to_text() const;

  // Relative data paths resolve against data_dir, which defaults to
  // $KASIMP_DATA_DIR when set.
  std::string resolve(const std::string& path) const;

  void validate() const;

 private:
  friend struct RunConfigFields;
  bool d_ff_explicit_ = false;

 public:
  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.to_text() == b.to_text();
  }
};

// Build identifier in `git describe` form, or "unknown".
const char* build_id();

}  // namespace kas
