#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kasimp/tensor.hpp"

namespace kas {

class Rng;

using Tokens = std::vector<std::string>;

Tokens split_tokens(std::string_view line);
std::string join_tokens(std::span<const std::string> tokens);

struct SentencePair {
  Tokens normal;
  Tokens simple;
  std::vector<Tokens> references;
};

// --- named entities -------------------------------------------------------------

enum class EntityType { kPer, kLoc, kOrg };

const char* entity_type_name(EntityType type);
std::optional<EntityType> parse_entity_type(std::string_view text);

// Half-open token span [begin, end).
struct EntitySpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  EntityType type = EntityType::kPer;
};

struct PairAnnotations {
  std::vector<EntitySpan> normal;
  std::vector<EntitySpan> simple;
};

// Placeholder token (e.g. "PER@1") to the surface string it replaced.
class EntityMap {
 public:
  void add(std::string placeholder, std::string surface);
  const std::string* find(std::string_view placeholder) const;
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

  friend bool operator==(const EntityMap&, const EntityMap&) = default;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

struct AnonymizedPair {
  SentencePair pair;
  EntityMap entities;
};

// True for tokens shaped TYPE@N with TYPE in {PER, LOC, ORG} and N >= 1.
bool is_placeholder(std::string_view token);

// Replaces every annotated span with one NE@N placeholder. Identical surface
// strings of the same type share a placeholder across both sides of the pair;
// N counts distinct entities per type in first-appearance order, normal side
// first.
AnonymizedPair anonymize_entities(const SentencePair& pair, const PairAnnotations& annotations);

// Replaces placeholders that appear in `entities` with their surface tokens.
Tokens restore_entities(std::span<const std::string> tokens, const EntityMap& entities);

// Longest-match dictionary tagger. Stands in for an external NER tool.
class GazetteerTagger {
 public:
  void add(std::string_view phrase, EntityType type);
  std::vector<EntitySpan> tag(std::span<const std::string> tokens) const;

 private:
  std::vector<std::pair<Tokens, EntityType>> entries_;
};

// Sidecar TSV: line_index, start_token, end_token_exclusive, type.
std::vector<std::vector<EntitySpan>> load_annotations(const std::string& path,
                                                      std::size_t line_count);

void save_entity_maps(const std::string& path, std::span<const EntityMap> maps);
std::vector<EntityMap> load_entity_maps(const std::string& path, std::size_t line_count);

// --- vocabulary -----------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();

  // Tokens seen more than min_count times in the training pairs (both sides)
  // receive ids, ordered by descending frequency then by token.
  static Vocabulary build(std::span<const SentencePair> pairs, std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t frequency(std::string_view token) const;
  std::size_t min_count() const { return min_count_; }

  // Appends EOS. Out-of-vocabulary tokens map to UNK.
  std::vector<int> encode(std::span<const std::string> tokens) const;
  // Drops PAD, BOS and EOS; restores placeholders when `entities` is given.
  Tokens decode(std::span<const int> ids, const EntityMap* entities = nullptr) const;

  // TSV rows: token, id, frequency.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.freq_of_id_ == b.freq_of_id_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> freq_of_id_;
  std::unordered_map<std::string, int> ids_;
  std::unordered_map<std::string, std::size_t> frequencies_;
  std::size_t min_count_ = 0;
};

// --- loading --------------------------------------------------------------------

struct LoadOptions {
  // 0 disables truncation.
  std::size_t max_length = 85;
};

struct LoadStats {
  std::size_t truncated = 0;
};

std::vector<Tokens> load_sentences(const std::string& path);

// Line-aligned normal/simple files.
std::vector<SentencePair> load_parallel(const std::string& normal_path,
                                        const std::string& simple_path,
                                        const LoadOptions& options = {},
                                        LoadStats* stats = nullptr);

// Normal file plus k reference files; each pair carries k references and uses
// the first one as its simple side.
std::vector<SentencePair> load_parallel_refs(const std::string& normal_path,
                                             std::span<const std::string> reference_paths,
                                             const LoadOptions& options = {},
                                             LoadStats* stats = nullptr);

void write_sentences(const std::string& path, std::span<const Tokens> sentences);

struct EmbeddingLoad {
  Tensor table;
  // Fraction of non-reserved vocabulary rows found in the file.
  double coverage = 0.0;
};

// Text rows "token v1 ... vdim". Rows not covered by the file are drawn from
// uniform(-0.1, 0.1).
EmbeddingLoad load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t dim,
                              Rng& rng);

}  // namespace kas
