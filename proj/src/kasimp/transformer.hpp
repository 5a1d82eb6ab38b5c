#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kasimp/tensor.hpp"

namespace kas {

class Rng;

enum class Mode { kBase, kDcss, kDmass, kDmassDcss };

const char* mode_name(Mode mode);
std::optional<Mode> parse_mode(std::string_view text);
inline bool uses_memory(Mode m) { return m == Mode::kDmass || m == Mode::kDmassDcss; }
inline bool uses_critic(Mode m) { return m == Mode::kDcss || m == Mode::kDmassDcss; }

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t heads = 5;
  std::size_t d_model = 300;
  std::size_t d_ff = 1200;
  std::size_t vocab_size = 0;
  double dropout = 0.2;
  // Decoder layer (1-based) whose encoder-attention output queries the rule
  // memory.
  std::size_t memory_layer = 1;
  Mode mode = Mode::kBase;
  std::size_t max_length = 85;

  // Architectural toggles; all on reproduces the standard Transformer block.
  bool residual = true;
  bool layer_norm = true;
  bool positional = true;
  bool attention_scale = true;

  void validate() const;
};

struct AttentionParams {
  // No key bias: it shifts every score in a row equally.
  Tensor wq, bq, wk, wv, bv, wo, bo;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct NormParams {
  Tensor gain, bias;
};

struct EncoderLayerParams {
  AttentionParams self_attention;
  NormParams self_norm;
  FeedForwardParams feed_forward;
  NormParams feed_forward_norm;
};

struct DecoderLayerParams {
  AttentionParams self_attention;
  NormParams self_norm;
  AttentionParams encoder_attention;
  NormParams encoder_norm;
  FeedForwardParams feed_forward;
  NormParams feed_forward_norm;
};

// Two-layer network over [decoder_top ; memory_read] producing the final
// output representation in memory modes. With the residual and layer-norm
// toggles on it is wrapped like every other sublayer.
struct CombinerParams {
  Tensor w1, b1, w2, b2;
  NormParams norm;
};

struct ModelParams {
  Tensor source_embedding;
  Tensor target_embedding;
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  Tensor output_weight;
  Tensor output_bias;
  std::optional<CombinerParams> combiner;

  static ModelParams initialize(const ModelConfig& config, Rng& rng);

  // Every trainable tensor under a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
};

struct AttentionResult {
  Tensor output;
  // One [queries x keys] distribution matrix per head.
  std::vector<Tensor> head_weights;
  // Mean over heads, for inspection.
  std::vector<double> mean_weights;
};

// Scaled dot-product attention over H heads of width d/H. `allowed` is a
// row-major [queries x keys] mask (non-zero = may attend); empty means all.
AttentionResult multi_head_attention(const Tensor& query, const Tensor& keys,
                                     const Tensor& values, const AttentionParams& params,
                                     std::size_t heads, std::span<const std::uint8_t> allowed,
                                     bool scale_scores = true);

struct EncoderState {
  // layers[0] is the embedding layer; layers[L] the final encoder states.
  std::vector<Tensor> layers;
  // self_weights[l][h] for layer l+1.
  std::vector<std::vector<Tensor>> self_weights;

  const Tensor& final() const { return layers.back(); }
};

struct DecoderState {
  std::vector<Tensor> layers;
  // contexts[l] is the encoder-attention output of layer l+1, one row per step.
  std::vector<Tensor> contexts;
  std::vector<std::vector<Tensor>> self_weights;
  std::vector<std::vector<Tensor>> encoder_weights;

  const Tensor& top() const { return layers.back(); }
};

struct EncodedPair {
  std::vector<int> source;  // ends with EOS
  std::vector<int> target;  // ends with EOS
};

// BOS followed by target[:-1]: the teacher-forced decoder input.
std::vector<int> teacher_forcing_input(std::span<const int> target);

std::vector<double> sinusoidal_encoding(std::size_t length, std::size_t dim);

class Transformer {
 public:
  Transformer(ModelConfig config, std::uint64_t seed);
  Transformer(ModelConfig config, ModelParams params);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // `rng` supplies dropout masks and may be null when not training.
  EncoderState encode(std::span<const int> source, bool training, Rng* rng) const;
  // Runs the decoder over the whole prefix (which must start with BOS);
  // row s of every output belongs to step s.
  DecoderState decode(std::span<const int> prefix, const EncoderState& encoder, bool training,
                      Rng* rng) const;
  // Output projection to vocabulary logits.
  Tensor project(const Tensor& states) const;

  // Logits of the next token after `prefix` (a 1 x V tensor).
  Tensor next_logits(std::span<const int> prefix, const EncoderState& encoder) const;

  // Mean token negative log-likelihood under teacher forcing.
  Tensor sequence_loss(const EncodedPair& pair, bool training, Rng* rng) const;

 private:
  Tensor embed(const Tensor& table, std::span<const int> ids, bool training, Rng* rng) const;
  Tensor sublayer(const Tensor& input, const Tensor& update, const NormParams& norm,
                  bool training, Rng* rng) const;
  Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) const;

  ModelConfig config_;
  ModelParams params_;
};

}  // namespace kas
