#include "kasimp/dmass.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "kasimp/binary_io.hpp"
#include "kasimp/error.hpp"

namespace kas {

namespace {

constexpr char kMemoryMagic[] = "KASMEM01";

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total;
}

}  // namespace

RuleMemory::RuleMemory(std::size_t dim, std::size_t slots_per_rule)
    : dim_(dim), slots_per_rule_(slots_per_rule) {
  require(slots_per_rule >= 1, ErrorKind::kConfig, "slots per rule must be at least 1");
}

std::size_t RuleMemory::slot_count() const {
  std::size_t n = 0;
  for (const auto& [id, slots] : slots_) n += slots.size();
  return n;
}

std::span<const MemorySlot> RuleMemory::slots(const RuleId& id) const {
  auto it = slots_.find(id);
  if (it == slots_.end()) return {};
  return it->second;
}

void RuleMemory::update(const RuleId& id, std::span<const double> query,
                        std::span<const double> output) {
  require(query.size() == dim_ && output.size() == dim_, ErrorKind::kContract,
          "memory update vectors must have size " + std::to_string(dim_));
  auto& slots = slots_[id];
  if (slots.size() < slots_per_rule_) {
    slots.push_back({id, {query.begin(), query.end()}, {output.begin(), output.end()}, 1});
    return;
  }
  auto nearest = std::min_element(slots.begin(), slots.end(), [&](const auto& a, const auto& b) {
    return squared_distance(a.key, query) < squared_distance(b.key, query);
  });
  for (std::size_t i = 0; i < dim_; ++i) {
    nearest->key[i] = (nearest->key[i] + query[i]) / 2.0;
    nearest->value[i] = (nearest->value[i] + output[i]) / 2.0;
  }
  ++nearest->update_count;
}

void RuleMemory::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write memory file " + path);
  out.write(kMemoryMagic, 8);
  binary::write_u64(out, dim_);
  binary::write_u64(out, slots_per_rule_);
  binary::write_u64(out, slot_count());
  for (const auto& [id, slots] : slots_) {
    for (const auto& slot : slots) {
      binary::write_string(out, id);
      binary::write_u64(out, slot.update_count);
      binary::write_doubles(out, slot.key);
      binary::write_doubles(out, slot.value);
    }
  }
  require(out.good(), ErrorKind::kIo, "failed writing memory file " + path);
}

RuleMemory RuleMemory::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open memory file " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::equal(magic, magic + 8, kMemoryMagic), ErrorKind::kFormat,
          path + " is not a rule memory file");
  const auto dim = binary::read_u64(in);
  const auto per_rule = binary::read_u64(in);
  const auto count = binary::read_u64(in);
  RuleMemory memory(dim, per_rule);
  for (std::uint64_t i = 0; i < count; ++i) {
    MemorySlot slot;
    slot.rule_id = binary::read_string(in);
    slot.update_count = binary::read_u64(in);
    slot.key = binary::read_doubles(in);
    slot.value = binary::read_doubles(in);
    require(slot.key.size() == dim && slot.value.size() == dim && slot.update_count >= 1,
            ErrorKind::kFormat, path + ": corrupt memory slot");
    memory.slots_[slot.rule_id].push_back(std::move(slot));
  }
  return memory;
}

MemoryReadResult memory_read(const Tensor& queries, std::span<const MemorySlot* const> candidates) {
  require(queries.rank() == 2, ErrorKind::kContract, "memory queries must be rank-2");
  const std::size_t n = queries.rows(), d = queries.cols();
  MemoryReadResult result;
  result.candidates.assign(candidates.begin(), candidates.end());
  if (candidates.empty()) {
    result.output = Tensor::zeros({n, d});
    return result;
  }
  const std::size_t c = candidates.size();
  std::vector<double> keys, values;
  keys.reserve(c * d);
  values.reserve(c * d);
  for (const auto* slot : candidates) {
    require(slot->key.size() == d && slot->value.size() == d, ErrorKind::kContract,
            "memory query of size " + std::to_string(d) + " does not match slot size " +
                std::to_string(slot->key.size()));
    keys.insert(keys.end(), slot->key.begin(), slot->key.end());
    values.insert(values.end(), slot->value.begin(), slot->value.end());
  }
  const Tensor key_matrix = Tensor::from({c, d}, std::move(keys));
  const Tensor value_matrix = Tensor::from({c, d}, std::move(values));
  const Tensor weights = softmax(matmul(queries, transpose(key_matrix)), -1);
  result.weights.assign(weights.data().begin(), weights.data().end());
  result.output = matmul(weights, value_matrix);
  return result;
}

std::vector<const MemorySlot*> memory_candidates(const RuleMemory& memory, const RuleIndex& index,
                                                 std::span<const std::string> source) {
  std::vector<const MemorySlot*> out;
  std::set<RuleId> seen;
  for (const auto& match : index.candidate_rules(source)) {
    auto id = rule_id(*match.rule);
    if (!seen.insert(id).second) continue;
    for (const auto& slot : memory.slots(id)) out.push_back(&slot);
  }
  return out;
}

Tensor combine(const Tensor& decoder_top, const Tensor& memory_output,
               const CombinerParams& params, bool residual, bool normalize) {
  require(decoder_top.shape() == memory_output.shape(), ErrorKind::kDimension,
          "combine: decoder " + shape_string(decoder_top.shape()) + " vs memory " +
              shape_string(memory_output.shape()));
  const Tensor joined = concat_cols({decoder_top, memory_output});
  Tensor y = add_bias(matmul(relu(add_bias(matmul(joined, params.w1), params.b1)), params.w2),
                      params.b2);
  if (residual) y = add(decoder_top, y);
  if (normalize) y = layer_norm(y, params.norm.gain, params.norm.bias);
  return y;
}

MemoryForward memory_forward(const Transformer& model, std::span<const int> prefix,
                             const EncoderState& encoder,
                             std::span<const MemorySlot* const> candidates, bool training,
                             Rng* rng) {
  const auto& params = model.params();
  require(params.combiner.has_value(), ErrorKind::kConfig,
          "model was built without a memory combiner (mode " +
              std::string(mode_name(model.config().mode)) + ")");
  MemoryForward out;
  out.decoder = model.decode(prefix, encoder, training, rng);
  const Tensor& query = out.decoder.contexts.at(model.config().memory_layer - 1);
  out.read = memory_read(query, candidates);
  out.combined = combine(out.decoder.top(), out.read.output, *params.combiner,
                         model.config().residual, model.config().layer_norm);
  out.logits = model.project(out.combined);
  return out;
}

}  // namespace kas
