#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kasimp/config.hpp"
#include "kasimp/transformer.hpp"

namespace kas {

// A self-describing training snapshot. On disk: the magic "KASCKPT1", an entry
// count, then named entries that are either text or shaped double arrays.
struct Checkpoint {
  RunConfig config;
  ModelConfig model;
  // Named parameter tensors in ModelParams::named() order.
  std::vector<std::pair<std::string, Tensor>> params;
  // Adagrad accumulators, parallel to `params`.
  std::vector<std::vector<double>> accumulators;
  std::string rng_state;
  std::uint64_t step = 0;
  double best_score = 0.0;
  // Current epoch order of the training examples and the position in it.
  std::vector<std::uint64_t> data_order;
  std::uint64_t data_cursor = 0;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Copies checkpointed values into the model's parameters, matching by name.
void restore_params(const Checkpoint& checkpoint, ModelParams& params);

// Path of the rule memory saved next to a checkpoint.
inline std::string memory_path(const std::string& checkpoint_path) {
  return checkpoint_path + ".mem";
}

}  // namespace kas
