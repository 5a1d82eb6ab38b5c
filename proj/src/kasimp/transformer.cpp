#include "kasimp/transformer.hpp"

#include <cmath>

#include "kasimp/corpus.hpp"
#include "kasimp/error.hpp"
#include "kasimp/random.hpp"

namespace kas {

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::uniform({fan_in, fan_out}, limit, rng, true);
}

Tensor zeros_param(std::size_t n) { return Tensor::zeros({n}, true); }

AttentionParams init_attention(std::size_t d, Rng& rng) {
  AttentionParams p;
  p.wq = xavier(d, d, rng);
  p.bq = zeros_param(d);
  p.wk = xavier(d, d, rng);
  p.wv = xavier(d, d, rng);
  p.bv = zeros_param(d);
  p.wo = xavier(d, d, rng);
  p.bo = zeros_param(d);
  return p;
}

FeedForwardParams init_feed_forward(std::size_t in, std::size_t hidden, std::size_t out,
                                    Rng& rng) {
  FeedForwardParams p;
  p.w1 = xavier(in, hidden, rng);
  p.b1 = zeros_param(hidden);
  p.w2 = xavier(hidden, out, rng);
  p.b2 = zeros_param(out);
  return p;
}

NormParams init_norm(std::size_t d) {
  return {Tensor::filled({d}, 1.0, true), Tensor::zeros({d}, true)};
}

void add_attention(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                   const AttentionParams& p) {
  out.emplace_back(prefix + ".wq", p.wq);
  out.emplace_back(prefix + ".bq", p.bq);
  out.emplace_back(prefix + ".wk", p.wk);
  out.emplace_back(prefix + ".wv", p.wv);
  out.emplace_back(prefix + ".bv", p.bv);
  out.emplace_back(prefix + ".wo", p.wo);
  out.emplace_back(prefix + ".bo", p.bo);
}

void add_feed_forward(std::vector<std::pair<std::string, Tensor>>& out,
                      const std::string& prefix, const FeedForwardParams& p) {
  out.emplace_back(prefix + ".w1", p.w1);
  out.emplace_back(prefix + ".b1", p.b1);
  out.emplace_back(prefix + ".w2", p.w2);
  out.emplace_back(prefix + ".b2", p.b2);
}

void add_norm(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
              const NormParams& p) {
  out.emplace_back(prefix + ".gain", p.gain);
  out.emplace_back(prefix + ".bias", p.bias);
}

std::vector<std::uint8_t> causal_mask(std::size_t n) {
  std::vector<std::uint8_t> allowed(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) allowed[i * n + j] = 1;
  return allowed;
}

}  // namespace

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::kBase: return "base";
    case Mode::kDcss: return "dcss";
    case Mode::kDmass: return "dmass";
    case Mode::kDmassDcss: return "dmass+dcss";
  }
  return "base";
}

std::optional<Mode> parse_mode(std::string_view text) {
  if (text == "base") return Mode::kBase;
  if (text == "dcss") return Mode::kDcss;
  if (text == "dmass") return Mode::kDmass;
  if (text == "dmass+dcss") return Mode::kDmassDcss;
  return std::nullopt;
}

void ModelConfig::validate() const {
  require(layers >= 1, ErrorKind::kConfig, "layer count L must be at least 1");
  require(heads >= 1, ErrorKind::kConfig, "head count H must be at least 1");
  require(d_model >= 1 && d_ff >= 1, ErrorKind::kConfig, "model sizes must be positive");
  require(d_model % heads == 0, ErrorKind::kConfig,
          "d_model " + std::to_string(d_model) + " is not divisible by H=" +
              std::to_string(heads));
  require(vocab_size > Vocabulary::kReserved, ErrorKind::kConfig,
          "vocabulary must contain more than the reserved tokens");
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::kConfig, "dropout must lie in [0, 1)");
  require(memory_layer >= 1 && memory_layer <= layers, ErrorKind::kConfig,
          "memory query layer j must satisfy 1 <= j <= L");
  require(max_length >= 1, ErrorKind::kConfig, "max_length must be positive");
}

ModelParams ModelParams::initialize(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.d_model, v = config.vocab_size;
  ModelParams p;
  p.source_embedding = Tensor::uniform({v, d}, 0.1, rng, true);
  p.target_embedding = Tensor::uniform({v, d}, 0.1, rng, true);
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderLayerParams layer;
    layer.self_attention = init_attention(d, rng);
    layer.self_norm = init_norm(d);
    layer.feed_forward = init_feed_forward(d, config.d_ff, d, rng);
    layer.feed_forward_norm = init_norm(d);
    p.encoder.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    DecoderLayerParams layer;
    layer.self_attention = init_attention(d, rng);
    layer.self_norm = init_norm(d);
    layer.encoder_attention = init_attention(d, rng);
    layer.encoder_norm = init_norm(d);
    layer.feed_forward = init_feed_forward(d, config.d_ff, d, rng);
    layer.feed_forward_norm = init_norm(d);
    p.decoder.push_back(std::move(layer));
  }
  // Small output weights keep the untrained distribution close to uniform.
  p.output_weight = Tensor::uniform({d, v}, std::sqrt(3.0 / (4.0 * d)), rng, true);
  p.output_bias = zeros_param(v);
  if (uses_memory(config.mode)) {
    CombinerParams c;
    c.w1 = xavier(2 * d, config.d_ff, rng);
    c.b1 = zeros_param(config.d_ff);
    c.w2 = xavier(config.d_ff, d, rng);
    c.b2 = zeros_param(d);
    c.norm = init_norm(d);
    p.combiner = std::move(c);
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("source_embedding", source_embedding);
  out.emplace_back("target_embedding", target_embedding);
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    add_attention(out, prefix + ".self_attention", encoder[l].self_attention);
    add_norm(out, prefix + ".self_norm", encoder[l].self_norm);
    add_feed_forward(out, prefix + ".feed_forward", encoder[l].feed_forward);
    add_norm(out, prefix + ".feed_forward_norm", encoder[l].feed_forward_norm);
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string prefix = "decoder." + std::to_string(l);
    add_attention(out, prefix + ".self_attention", decoder[l].self_attention);
    add_norm(out, prefix + ".self_norm", decoder[l].self_norm);
    add_attention(out, prefix + ".encoder_attention", decoder[l].encoder_attention);
    add_norm(out, prefix + ".encoder_norm", decoder[l].encoder_norm);
    add_feed_forward(out, prefix + ".feed_forward", decoder[l].feed_forward);
    add_norm(out, prefix + ".feed_forward_norm", decoder[l].feed_forward_norm);
  }
  out.emplace_back("output.weight", output_weight);
  out.emplace_back("output.bias", output_bias);
  if (combiner) {
    out.emplace_back("combiner.w1", combiner->w1);
    out.emplace_back("combiner.b1", combiner->b1);
    out.emplace_back("combiner.w2", combiner->w2);
    out.emplace_back("combiner.b2", combiner->b2);
    add_norm(out, "combiner.norm", combiner->norm);
  }
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

AttentionResult multi_head_attention(const Tensor& query, const Tensor& keys,
                                     const Tensor& values, const AttentionParams& params,
                                     std::size_t heads, std::span<const std::uint8_t> allowed,
                                     bool scale_scores) {
  require(query.rank() == 2 && keys.rank() == 2 && values.rank() == 2, ErrorKind::kDimension,
          "attention inputs must be rank-2");
  const std::size_t d = query.cols();
  require(heads >= 1 && d % heads == 0, ErrorKind::kContract,
          "attention width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
              " heads");
  require(keys.rows() == values.rows(), ErrorKind::kDimension,
          "attention keys and values disagree on length");
  const std::size_t n = query.rows(), m = keys.rows(), width = d / heads;
  std::vector<std::uint8_t> all;
  if (allowed.empty()) {
    all.assign(n * m, 1);
    allowed = all;
  }
  require(allowed.size() == n * m, ErrorKind::kDimension, "attention mask has the wrong size");

  const Tensor q = add_bias(matmul(query, params.wq), params.bq);
  const Tensor k = matmul(keys, params.wk);
  const Tensor v = add_bias(matmul(values, params.wv), params.bv);
  const double factor = scale_scores ? 1.0 / std::sqrt(static_cast<double>(width)) : 1.0;

  AttentionResult result;
  result.mean_weights.assign(n * m, 0.0);
  std::vector<Tensor> outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * width, (h + 1) * width);
    const Tensor kh = slice_cols(k, h * width, (h + 1) * width);
    const Tensor vh = slice_cols(v, h * width, (h + 1) * width);
    Tensor scores = matmul(qh, transpose(kh));
    if (factor != 1.0) scores = scale(scores, factor);
    Tensor weights = masked_softmax(scores, allowed);
    for (std::size_t i = 0; i < n * m; ++i)
      result.mean_weights[i] += weights.data()[i] / static_cast<double>(heads);
    outputs.push_back(matmul(weights, vh));
    result.head_weights.push_back(std::move(weights));
  }
  const Tensor joined = heads == 1 ? outputs.front() : concat_cols(outputs);
  result.output = add_bias(matmul(joined, params.wo), params.bo);
  return result;
}

std::vector<int> teacher_forcing_input(std::span<const int> target) {
  std::vector<int> input{Vocabulary::kBos};
  if (!target.empty()) input.insert(input.end(), target.begin(), target.end() - 1);
  return input;
}

std::vector<double> sinusoidal_encoding(std::size_t length, std::size_t dim) {
  std::vector<double> pe(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Transformer::Transformer(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  params_ = ModelParams::initialize(config_, rng);
}

Transformer::Transformer(ModelConfig config, ModelParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
}

Tensor Transformer::embed(const Tensor& table, std::span<const int> ids, bool training,
                          Rng* rng) const {
  Tensor x = embedding(table, ids);
  if (config_.positional) {
    const std::size_t d = config_.d_model;
    x = scale(x, std::sqrt(static_cast<double>(d)));
    x = add(x, Tensor::from({ids.size(), d}, sinusoidal_encoding(ids.size(), d)));
  }
  if (training && config_.dropout > 0.0) x = dropout(x, config_.dropout, *rng, true);
  return x;
}

Tensor Transformer::sublayer(const Tensor& input, const Tensor& update, const NormParams& norm,
                             bool training, Rng* rng) const {
  Tensor y = update;
  if (training && config_.dropout > 0.0) y = dropout(y, config_.dropout, *rng, true);
  if (config_.residual) y = add(input, y);
  if (config_.layer_norm) y = layer_norm(y, norm.gain, norm.bias);
  return y;
}

Tensor Transformer::feed_forward(const Tensor& x, const FeedForwardParams& p) const {
  return add_bias(matmul(relu(add_bias(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

EncoderState Transformer::encode(std::span<const int> source, bool training, Rng* rng) const {
  require(!source.empty(), ErrorKind::kContract, "cannot encode an empty input");
  require(source.size() <= config_.max_length + 1, ErrorKind::kContract,
          "input of " + std::to_string(source.size()) + " ids exceeds the maximum length");
  require(!training || config_.dropout == 0.0 || rng != nullptr, ErrorKind::kContract,
          "training mode needs a random stream");
  EncoderState state;
  Tensor x = embed(params_.source_embedding, source, training, rng);
  state.layers.push_back(x);
  for (const auto& layer : params_.encoder) {
    auto attn = multi_head_attention(x, x, x, layer.self_attention, config_.heads, {},
                                     config_.attention_scale);
    x = sublayer(x, attn.output, layer.self_norm, training, rng);
    x = sublayer(x, feed_forward(x, layer.feed_forward), layer.feed_forward_norm, training, rng);
    state.layers.push_back(x);
    state.self_weights.push_back(std::move(attn.head_weights));
  }
  return state;
}

DecoderState Transformer::decode(std::span<const int> prefix, const EncoderState& encoder,
                                 bool training, Rng* rng) const {
  require(!prefix.empty() && prefix.front() == Vocabulary::kBos, ErrorKind::kContract,
          "decoder prefix must begin with BOS");
  require(prefix.size() <= config_.max_length + 1, ErrorKind::kContract,
          "decoder prefix of " + std::to_string(prefix.size()) +
              " ids exceeds the maximum length");
  require(!training || config_.dropout == 0.0 || rng != nullptr, ErrorKind::kContract,
          "training mode needs a random stream");
  DecoderState state;
  const auto mask = causal_mask(prefix.size());
  const Tensor& memory = encoder.final();
  Tensor y = embed(params_.target_embedding, prefix, training, rng);
  state.layers.push_back(y);
  for (const auto& layer : params_.decoder) {
    auto self = multi_head_attention(y, y, y, layer.self_attention, config_.heads, mask,
                                     config_.attention_scale);
    y = sublayer(y, self.output, layer.self_norm, training, rng);
    auto cross = multi_head_attention(y, memory, memory, layer.encoder_attention, config_.heads,
                                      {}, config_.attention_scale);
    state.contexts.push_back(cross.output);
    y = sublayer(y, cross.output, layer.encoder_norm, training, rng);
    y = sublayer(y, feed_forward(y, layer.feed_forward), layer.feed_forward_norm, training, rng);
    state.layers.push_back(y);
    state.self_weights.push_back(std::move(self.head_weights));
    state.encoder_weights.push_back(std::move(cross.head_weights));
  }
  return state;
}

Tensor Transformer::project(const Tensor& states) const {
  return add_bias(matmul(states, params_.output_weight), params_.output_bias);
}

Tensor Transformer::next_logits(std::span<const int> prefix, const EncoderState& encoder) const {
  const auto state = decode(prefix, encoder, false, nullptr);
  const Tensor& top = state.top();
  return project(slice_rows(top, top.rows() - 1, top.rows()));
}

Tensor Transformer::sequence_loss(const EncodedPair& pair, bool training, Rng* rng) const {
  const auto encoder = encode(pair.source, training, rng);
  const auto input = teacher_forcing_input(pair.target);
  const auto decoder = decode(input, encoder, training, rng);
  return cross_entropy(project(decoder.top()), pair.target);
}

}  // namespace kas
