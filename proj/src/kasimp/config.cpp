#include "kasimp/config.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "kasimp/corpus.hpp"
#include "kasimp/error.hpp"

#ifndef KASIMP_BUILD_ID
#define KASIMP_BUILD_ID "unknown"
#endif

namespace kas {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::size_t parse_size(std::string_view key, std::string_view text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    fail(ErrorKind::kConfig, std::string(key) + ": expected a non-negative integer, got '" +
                                 std::string(text) + "'");
  }
  return value;
}

double parse_double(std::string_view key, std::string_view text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    fail(ErrorKind::kConfig,
         std::string(key) + ": expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  fail(ErrorKind::kConfig,
       std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto part = trim(text.substr(start, comma == std::string_view::npos ? text.npos
                                                                              : comma - start));
    if (!part.empty()) out.push_back(part);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field size_field(std::string key, Member member) {
  return {key,
          [member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_size(k, v);
          },
          [member](const RunConfig& c) {
            return std::to_string(member(const_cast<RunConfig&>(c)));
          }};
}

template <typename Member>
Field double_field(std::string key, Member member) {
  return {key,
          [member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_double(k, v);
          },
          [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field bool_field(std::string key, Member member) {
  return {key,
          [member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_bool(k, v);
          },
          [member](const RunConfig& c) { return format_bool(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field string_field(std::string key, Member member) {
  return {key,
          [member](RunConfig& c, std::string_view, std::string_view v) {
            member(c) = std::string(v);
          },
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

#define KAS_MEMBER(expr) [](RunConfig& c) -> auto& { return c.expr; }

}  // namespace

struct RunConfigFields {
  static const std::vector<Field>& all() {
    static const std::vector<Field> fields = [] {
      std::vector<Field> f;
      f.push_back(size_field("layers", KAS_MEMBER(model.layers)));
      f.push_back(size_field("heads", KAS_MEMBER(model.heads)));
      f.push_back({"d_model",
                   [](RunConfig& c, std::string_view k, std::string_view v) {
                     c.model.d_model = parse_size(k, v);
                     if (!c.d_ff_explicit_) c.model.d_ff = 4 * c.model.d_model;
                   },
                   [](const RunConfig& c) { return std::to_string(c.model.d_model); }});
      f.push_back({"d_ff",
                   [](RunConfig& c, std::string_view k, std::string_view v) {
                     c.model.d_ff = parse_size(k, v);
                     c.d_ff_explicit_ = true;
                   },
                   [](const RunConfig& c) { return std::to_string(c.model.d_ff); }});
      f.push_back(double_field("dropout", KAS_MEMBER(model.dropout)));
      f.push_back(size_field("memory_layer", KAS_MEMBER(model.memory_layer)));
      f.push_back({"mode",
                   [](RunConfig& c, std::string_view k, std::string_view v) {
                     const auto mode = parse_mode(v);
                     if (!mode) {
                       fail(ErrorKind::kConfig, std::string(k) + ": unknown mode '" +
                                                    std::string(v) +
                                                    "' (base, dcss, dmass, dmass+dcss)");
                     }
                     c.model.mode = *mode;
                   },
                   [](const RunConfig& c) { return std::string(mode_name(c.model.mode)); }});
      f.push_back(size_field("max_length", KAS_MEMBER(model.max_length)));
      f.push_back(bool_field("residual", KAS_MEMBER(model.residual)));
      f.push_back(bool_field("layer_norm", KAS_MEMBER(model.layer_norm)));
      f.push_back(bool_field("positional", KAS_MEMBER(model.positional)));
      f.push_back(bool_field("attention_scale", KAS_MEMBER(model.attention_scale)));

      f.push_back(double_field("learning_rate", KAS_MEMBER(learning_rate)));
      f.push_back(double_field("adagrad_initial_accumulator",
                               KAS_MEMBER(adagrad_initial_accumulator)));
      f.push_back(double_field("gradient_clip", KAS_MEMBER(clip_threshold)));
      f.push_back({"clip_mode",
                   [](RunConfig& c, std::string_view k, std::string_view v) {
                     if (v == "norm") {
                       c.clip_mode = ClipMode::kGlobalNorm;
                     } else if (v == "value") {
                       c.clip_mode = ClipMode::kValue;
                     } else {
                       fail(ErrorKind::kConfig, std::string(k) + ": expected norm or value, got '" +
                                                    std::string(v) + "'");
                     }
                   },
                   [](const RunConfig& c) {
                     return std::string(c.clip_mode == ClipMode::kGlobalNorm ? "norm" : "value");
                   }});

      f.push_back(size_field("batch_size", KAS_MEMBER(batch_size)));
      f.push_back(size_field("steps", KAS_MEMBER(steps)));
      f.push_back({"seed",
                   [](RunConfig& c, std::string_view k, std::string_view v) {
                     std::uint64_t value = 0;
                     const auto* end = v.data() + v.size();
                     const auto [ptr, ec] = std::from_chars(v.data(), end, value);
                     if (ec != std::errc() || ptr != end || v.empty()) {
                       fail(ErrorKind::kConfig, std::string(k) + ": expected an integer, got '" +
                                                    std::string(v) + "'");
                     }
                     c.seed = value;
                   },
                   [](const RunConfig& c) { return std::to_string(c.seed); }});
      f.push_back(size_field("critic_schedule", KAS_MEMBER(critic_schedule)));
      f.push_back(bool_field("critic_extend_case1", KAS_MEMBER(critic_extend_case1)));
      f.push_back(size_field("eval_interval", KAS_MEMBER(eval_interval)));
      f.push_back(size_field("checkpoint_interval", KAS_MEMBER(checkpoint_interval)));
      f.push_back(size_field("slots_per_rule", KAS_MEMBER(slots_per_rule)));

      f.push_back(size_field("min_count", KAS_MEMBER(min_count)));
      f.push_back(double_field("min_rule_weight", KAS_MEMBER(min_rule_weight)));
      f.push_back(bool_field("type_gating", KAS_MEMBER(type_gating)));

      f.push_back(size_field("beam_size", KAS_MEMBER(beam_size)));
      f.push_back(size_field("max_decode_extra", KAS_MEMBER(max_decode_extra)));
      f.push_back(bool_field("length_normalize", KAS_MEMBER(length_normalize)));
      f.push_back(bool_field("restore_entities", KAS_MEMBER(restore_entities)));
      f.push_back(bool_field("deletion_precision_only", KAS_MEMBER(deletion_precision_only)));

      f.push_back(string_field("data_dir", KAS_MEMBER(data_dir)));
      f.push_back(string_field("train_normal", KAS_MEMBER(train_normal)));
      f.push_back(string_field("train_simple", KAS_MEMBER(train_simple)));
      f.push_back(string_field("valid_normal", KAS_MEMBER(valid_normal)));
      f.push_back({"valid_refs",
                   [](RunConfig& c, std::string_view, std::string_view v) {
                     c.valid_refs = split_list(v);
                   },
                   [](const RunConfig& c) { return join_list(c.valid_refs); }});
      f.push_back(string_field("vocab", KAS_MEMBER(vocab)));
      f.push_back(string_field("rulebase", KAS_MEMBER(rulebase)));
      f.push_back(string_field("embeddings", KAS_MEMBER(embeddings)));
      f.push_back(string_field("pos_lexicon", KAS_MEMBER(pos_lexicon)));
      f.push_back(string_field("checkpoint", KAS_MEMBER(checkpoint)));
      f.push_back(string_field("output", KAS_MEMBER(output)));
      f.push_back(string_field("log", KAS_MEMBER(log)));
      return f;
    }();
    return fields;
  }
};

namespace {

const Field& find_field(std::string_view key) {
  if (key == "embedding_dim") key = "d_model";
  if (key == "gradient_clip_norm") key = "gradient_clip";
  for (const auto& f : RunConfigFields::all()) {
    if (f.key == key) return f;
  }
  fail(ErrorKind::kConfig, "unknown configuration key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  find_field(key).set(*this, key, trim(value));
}

std::string RunConfig::get(std::string_view key) const { return find_field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : RunConfigFields::all()) out.push_back(f.key);
    return out;
  }();
  return names;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  try {
    load_text(text.str());
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

void RunConfig::load_text(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": expected key=value");
    }
    set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : RunConfigFields::all()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::resolve(const std::string& path) const {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  std::string base = data_dir;
  if (base.empty()) {
    if (const char* env = std::getenv("KASIMP_DATA_DIR")) base = env;
  }
  if (base.empty()) return path;
  return (std::filesystem::path(base) / p).string();
}

void RunConfig::validate() const {
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = Vocabulary::kReserved + 1;
  m.validate();
  require(learning_rate > 0.0, ErrorKind::kConfig, "learning_rate must be positive");
  require(adagrad_initial_accumulator > 0.0, ErrorKind::kConfig,
          "adagrad_initial_accumulator must be positive");
  require(clip_threshold > 0.0, ErrorKind::kConfig, "gradient_clip must be positive");
  require(batch_size >= 1, ErrorKind::kConfig, "batch_size must be at least 1");
  require(beam_size >= 1, ErrorKind::kConfig, "beam_size must be at least 1");
  require(critic_schedule >= 1, ErrorKind::kConfig, "critic_schedule must be at least 1");
  require(slots_per_rule >= 1, ErrorKind::kConfig, "slots_per_rule must be at least 1");
  require(model.dropout >= 0.0 && model.dropout < 1.0, ErrorKind::kConfig,
          "dropout must lie in [0, 1)");
}

const char* build_id() { return KASIMP_BUILD_ID; }

}  // namespace kas
