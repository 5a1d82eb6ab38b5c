#include "kasimp/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kasimp/error.hpp"
#include "kasimp/log.hpp"
#include "kasimp/random.hpp"

namespace kas {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path);
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void validate_spans(std::vector<EntitySpan>& spans, std::size_t length, const char* side) {
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.begin < b.begin; });
  for (std::size_t i = 0; i < spans.size(); ++i) {
    require(spans[i].begin < spans[i].end && spans[i].end <= length, ErrorKind::kAnnotation,
            std::string("entity span [") + std::to_string(spans[i].begin) + ", " +
                std::to_string(spans[i].end) + ") is outside the " + side + " sentence of " +
                std::to_string(length) + " tokens");
    if (i > 0) {
      require(spans[i - 1].end <= spans[i].begin, ErrorKind::kAnnotation,
              std::string("overlapping entity spans on the ") + side + " side at token " +
                  std::to_string(spans[i].begin));
    }
  }
}

std::size_t truncate(Tokens& tokens, std::size_t max_length) {
  if (max_length == 0 || tokens.size() <= max_length) return 0;
  tokens.resize(max_length);
  return 1;
}

}  // namespace

Tokens split_tokens(std::string_view line) {
  Tokens tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) tokens.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// --- entities -------------------------------------------------------------------

const char* entity_type_name(EntityType type) {
  switch (type) {
    case EntityType::kPer: return "PER";
    case EntityType::kLoc: return "LOC";
    case EntityType::kOrg: return "ORG";
  }
  return "PER";
}

std::optional<EntityType> parse_entity_type(std::string_view text) {
  if (text == "PER") return EntityType::kPer;
  if (text == "LOC") return EntityType::kLoc;
  if (text == "ORG") return EntityType::kOrg;
  return std::nullopt;
}

void EntityMap::add(std::string placeholder, std::string surface) {
  entries_.insert_or_assign(std::move(placeholder), std::move(surface));
}

const std::string* EntityMap::find(std::string_view placeholder) const {
  auto it = entries_.find(placeholder);
  return it == entries_.end() ? nullptr : &it->second;
}

bool is_placeholder(std::string_view token) {
  const auto at = token.find('@');
  if (at == std::string_view::npos || !parse_entity_type(token.substr(0, at))) return false;
  const auto digits = token.substr(at + 1);
  if (digits.empty() || digits[0] == '0') return false;
  return std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; });
}

AnonymizedPair anonymize_entities(const SentencePair& pair, const PairAnnotations& annotations) {
  auto normal_spans = annotations.normal;
  auto simple_spans = annotations.simple;
  validate_spans(normal_spans, pair.normal.size(), "normal");
  validate_spans(simple_spans, pair.simple.size(), "simple");

  AnonymizedPair result;
  result.pair.references = pair.references;
  std::map<std::pair<EntityType, std::string>, std::string> assigned;
  int counters[3] = {0, 0, 0};

  auto rewrite = [&](const Tokens& tokens, const std::vector<EntitySpan>& spans) {
    Tokens out;
    std::size_t next = 0;
    for (std::size_t i = 0; i < tokens.size();) {
      if (next < spans.size() && spans[next].begin == i) {
        const auto& span = spans[next++];
        const std::span<const std::string> words(tokens.data() + span.begin,
                                                 span.end - span.begin);
        auto key = std::make_pair(span.type, join_tokens(words));
        auto it = assigned.find(key);
        if (it == assigned.end()) {
          const int n = ++counters[static_cast<int>(span.type)];
          std::string placeholder = std::string(entity_type_name(span.type)) + "@" +
                                    std::to_string(n);
          result.entities.add(placeholder, key.second);
          it = assigned.emplace(std::move(key), std::move(placeholder)).first;
        }
        out.push_back(it->second);
        i = span.end;
      } else {
        out.push_back(tokens[i++]);
      }
    }
    return out;
  };

  result.pair.normal = rewrite(pair.normal, normal_spans);
  result.pair.simple = rewrite(pair.simple, simple_spans);
  return result;
}

Tokens restore_entities(std::span<const std::string> tokens, const EntityMap& entities) {
  Tokens out;
  for (const auto& t : tokens) {
    if (const auto* surface = entities.find(t)) {
      for (auto& w : split_tokens(*surface)) out.push_back(std::move(w));
    } else {
      out.push_back(t);
    }
  }
  return out;
}

void GazetteerTagger::add(std::string_view phrase, EntityType type) {
  auto tokens = split_tokens(phrase);
  require(!tokens.empty(), ErrorKind::kAnnotation, "empty gazetteer phrase");
  entries_.emplace_back(std::move(tokens), type);
}

std::vector<EntitySpan> GazetteerTagger::tag(std::span<const std::string> tokens) const {
  std::vector<EntitySpan> spans;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t best_len = 0;
    EntityType best_type = EntityType::kPer;
    for (const auto& [phrase, type] : entries_) {
      if (phrase.size() <= best_len || i + phrase.size() > tokens.size()) continue;
      if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + i)) {
        best_len = phrase.size();
        best_type = type;
      }
    }
    if (best_len > 0) {
      spans.push_back({i, i + best_len, best_type});
      i += best_len;
    } else {
      ++i;
    }
  }
  return spans;
}

std::vector<std::vector<EntitySpan>> load_annotations(const std::string& path,
                                                      std::size_t line_count) {
  auto in = open_input(path);
  std::vector<std::vector<EntitySpan>> result(line_count);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tabs(line);
    std::size_t index = 0;
    EntitySpan span;
    std::optional<EntityType> type;
    const bool ok = f.size() == 4 && parse_number(f[0], index) &&
                    parse_number(f[1], span.begin) && parse_number(f[2], span.end) &&
                    (type = parse_entity_type(f[3]));
    require(ok, ErrorKind::kFormat, path + ":" + std::to_string(lineno) +
                                        ": expected line_index<TAB>start<TAB>end<TAB>PER|LOC|ORG");
    require(index < line_count, ErrorKind::kAnnotation,
            path + ":" + std::to_string(lineno) + ": line index " + std::to_string(index) +
                " beyond corpus of " + std::to_string(line_count) + " lines");
    span.type = *type;
    result[index].push_back(span);
  }
  return result;
}

void save_entity_maps(const std::string& path, std::span<const EntityMap> maps) {
  auto out = open_output(path);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    for (const auto& [placeholder, surface] : maps[i].entries()) {
      out << i << '\t' << placeholder << '\t' << surface << '\n';
    }
  }
}

std::vector<EntityMap> load_entity_maps(const std::string& path, std::size_t line_count) {
  auto in = open_input(path);
  std::vector<EntityMap> maps(line_count);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    std::size_t index = 0;
    require(f.size() == 3 && parse_number(f[0], index) && index < line_count &&
                is_placeholder(f[1]),
            ErrorKind::kFormat, path + ":" + std::to_string(lineno) + ": malformed entity row");
    maps[index].add(f[1], f[2]);
  }
  return maps;
}

// --- vocabulary -----------------------------------------------------------------

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<s>", "</s>", "UNK"};
  freq_of_id_.assign(kReserved, 0);
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = static_cast<int>(i);
}

Vocabulary Vocabulary::build(std::span<const SentencePair> pairs, std::size_t min_count) {
  require(!pairs.empty(), ErrorKind::kCorpus, "cannot build a vocabulary from an empty corpus");
  Vocabulary vocab;
  vocab.min_count_ = min_count;
  for (const auto& p : pairs) {
    for (const auto& t : p.normal) ++vocab.frequencies_[t];
    for (const auto& t : p.simple) ++vocab.frequencies_[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [token, count] : vocab.frequencies_) {
    if (count > min_count && !vocab.ids_.contains(token)) kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (auto& [token, count] : kept) {
    vocab.ids_[token] = static_cast<int>(vocab.tokens_.size());
    vocab.tokens_.push_back(token);
    vocab.freq_of_id_.push_back(count);
  }
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.contains(std::string(token));
}

const std::string& Vocabulary::token(int id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), ErrorKind::kIndex,
          "unknown token id " + std::to_string(id) + " (vocabulary size " +
              std::to_string(tokens_.size()) + ")");
  return tokens_[id];
}

std::size_t Vocabulary::frequency(std::string_view token) const {
  auto it = frequencies_.find(std::string(token));
  return it == frequencies_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& t : tokens) ids.push_back(id(t));
  ids.push_back(kEos);
  return ids;
}

Tokens Vocabulary::decode(std::span<const int> ids, const EntityMap* entities) const {
  Tokens out;
  for (int i : ids) {
    const auto& t = token(i);
    if (i == kPad || i == kBos || i == kEos) continue;
    if (entities) {
      if (const auto* surface = entities->find(t)) {
        for (auto& w : split_tokens(*surface)) out.push_back(std::move(w));
        continue;
      }
    }
    out.push_back(t);
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  auto out = open_output(path);
  out << "#min_count\t" << min_count_ << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << i << '\t' << freq_of_id_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  auto in = open_input(path);
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.freq_of_id_.clear();
  vocab.ids_.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f[0] == "#min_count" && f.size() == 2) {
      require(parse_number(f[1], vocab.min_count_), ErrorKind::kFormat,
              path + ": malformed min_count header");
      continue;
    }
    std::size_t id = 0, freq = 0;
    require(f.size() == 3 && parse_number(f[1], id) && parse_number(f[2], freq),
            ErrorKind::kFormat,
            path + ":" + std::to_string(lineno) + ": expected token<TAB>id<TAB>frequency");
    require(id == vocab.tokens_.size(), ErrorKind::kFormat,
            path + ":" + std::to_string(lineno) + ": ids must be dense and ascending");
    require(!vocab.ids_.contains(f[0]), ErrorKind::kFormat,
            path + ":" + std::to_string(lineno) + ": duplicate token " + f[0]);
    vocab.ids_[f[0]] = static_cast<int>(id);
    vocab.tokens_.push_back(f[0]);
    vocab.freq_of_id_.push_back(freq);
    if (id >= kReserved) vocab.frequencies_[f[0]] = freq;
  }
  const Vocabulary reference;
  require(vocab.tokens_.size() >= kReserved &&
              std::equal(reference.tokens_.begin(), reference.tokens_.end(),
                         vocab.tokens_.begin()),
          ErrorKind::kFormat, path + ": reserved tokens missing or reordered");
  return vocab;
}

// --- loading --------------------------------------------------------------------

std::vector<Tokens> load_sentences(const std::string& path) {
  auto in = open_input(path);
  std::vector<Tokens> sentences;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = split_tokens(line);
    require(!tokens.empty(), ErrorKind::kFormat,
            path + ":" + std::to_string(sentences.size() + 1) + ": empty sentence");
    sentences.push_back(std::move(tokens));
  }
  return sentences;
}

std::vector<SentencePair> load_parallel(const std::string& normal_path,
                                        const std::string& simple_path,
                                        const LoadOptions& options, LoadStats* stats) {
  auto normal = load_sentences(normal_path);
  auto simple = load_sentences(simple_path);
  require(normal.size() == simple.size(), ErrorKind::kAlignment,
          "line counts differ: " + normal_path + " has " + std::to_string(normal.size()) +
              ", " + simple_path + " has " + std::to_string(simple.size()));
  std::vector<SentencePair> pairs(normal.size());
  std::size_t truncated = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].normal = std::move(normal[i]);
    pairs[i].simple = std::move(simple[i]);
    truncated += truncate(pairs[i].normal, options.max_length);
    truncated += truncate(pairs[i].simple, options.max_length);
  }
  if (truncated > 0) {
    log_warning("truncated " + std::to_string(truncated) + " sentences to " +
                std::to_string(options.max_length) + " tokens");
  }
  if (stats) stats->truncated = truncated;
  return pairs;
}

std::vector<SentencePair> load_parallel_refs(const std::string& normal_path,
                                             std::span<const std::string> reference_paths,
                                             const LoadOptions& options, LoadStats* stats) {
  require(!reference_paths.empty(), ErrorKind::kContract, "at least one reference file needed");
  auto normal = load_sentences(normal_path);
  std::vector<SentencePair> pairs(normal.size());
  std::size_t truncated = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].normal = std::move(normal[i]);
    truncated += truncate(pairs[i].normal, options.max_length);
  }
  for (const auto& ref_path : reference_paths) {
    auto refs = load_sentences(ref_path);
    require(refs.size() == pairs.size(), ErrorKind::kAlignment,
            "line counts differ: " + normal_path + " has " + std::to_string(pairs.size()) +
                ", " + ref_path + " has " + std::to_string(refs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      truncated += truncate(refs[i], options.max_length);
      pairs[i].references.push_back(std::move(refs[i]));
    }
  }
  for (auto& p : pairs) p.simple = p.references.front();
  if (truncated > 0) {
    log_warning("truncated " + std::to_string(truncated) + " sentences to " +
                std::to_string(options.max_length) + " tokens");
  }
  if (stats) stats->truncated = truncated;
  return pairs;
}

void write_sentences(const std::string& path, std::span<const Tokens> sentences) {
  auto out = open_output(path);
  for (const auto& s : sentences) out << join_tokens(s) << '\n';
}

EmbeddingLoad load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t dim,
                              Rng& rng) {
  require(dim > 0, ErrorKind::kContract, "embedding dimension must be positive");
  auto in = open_input(path);
  EmbeddingLoad result;
  result.table = Tensor::uniform({vocab.size(), dim}, 0.1, rng);
  std::vector<bool> covered(vocab.size(), false);
  std::string line;
  std::size_t lineno = 0;
  auto table = result.table.mutable_data();
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    auto fields = split_tokens(line);
    if (fields.empty()) continue;
    require(fields.size() == dim + 1, ErrorKind::kFormat,
            path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                " values, found " + std::to_string(fields.size() - 1));
    if (!vocab.contains(fields[0])) continue;
    const int id = vocab.id(fields[0]);
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0.0;
      std::istringstream num(fields[j + 1]);
      num >> v;
      require(!num.fail(), ErrorKind::kFormat,
              path + ":" + std::to_string(lineno) + ": bad number " + fields[j + 1]);
      table[id * dim + j] = v;
    }
    covered[id] = true;
  }
  std::size_t hits = 0;
  for (std::size_t i = Vocabulary::kReserved; i < covered.size(); ++i) hits += covered[i];
  const std::size_t denom = vocab.size() - Vocabulary::kReserved;
  result.coverage = denom == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(denom);
  return result;
}

}  // namespace kas
