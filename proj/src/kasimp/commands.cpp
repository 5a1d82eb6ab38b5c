#include "kasimp/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "kasimp/error.hpp"
#include "kasimp/log.hpp"

namespace kas {

namespace {

namespace fs = std::filesystem;

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path);
  out << text;
  require(out.good(), ErrorKind::kIo, "failed writing " + path);
}

PosTagger lexicon_tagger(const std::string& path) {
  auto lexicon = std::make_shared<std::unordered_map<std::string, std::string>>();
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (line.empty() || line[0] == '#' || tab == std::string::npos) continue;
    (*lexicon)[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return [lexicon](std::span<const std::string> tokens) {
    std::vector<std::string> tags;
    tags.reserve(tokens.size());
    for (const auto& t : tokens) {
      const auto it = lexicon->find(t);
      tags.push_back(it == lexicon->end() ? std::string() : it->second);
    }
    return tags;
  };
}

std::unique_ptr<RuleIndex> load_rule_index(const RunConfig& config) {
  if (config.rulebase.empty()) return nullptr;
  const auto path = config.resolve(config.rulebase);
  auto parsed = parse_rulebase(path, config.min_rule_weight);
  if (parsed.malformed > 0) {
    log_warning(path + ": skipped " + std::to_string(parsed.malformed) + " malformed rule lines");
  }
  auto index = std::make_unique<RuleIndex>(std::move(parsed.rules));
  if (config.type_gating) {
    require(!config.pos_lexicon.empty(), ErrorKind::kConfig,
            "type_gating needs pos_lexicon (token<TAB>tag lines)");
    index->set_type_gate(lexicon_tagger(config.resolve(config.pos_lexicon)));
  }
  return index;
}

LoadOptions load_options(const RunConfig& config) {
  LoadOptions o;
  o.max_length = config.model.max_length;
  return o;
}

std::optional<ValidationSet> load_validation(const RunConfig& config) {
  if (config.valid_normal.empty() || config.valid_refs.empty()) return std::nullopt;
  std::vector<std::string> refs;
  for (const auto& r : config.valid_refs) refs.push_back(config.resolve(r));
  const auto pairs = load_parallel_refs(config.resolve(config.valid_normal), refs,
                                        load_options(config));
  ValidationSet v;
  for (const auto& p : pairs) {
    v.sources.push_back(p.normal);
    v.references.push_back(p.references);
  }
  return v;
}

std::vector<Tokens> load_lines(const std::string& path) { return load_sentences(path); }

// System outputs may contain empty lines.
std::vector<Tokens> load_outputs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot read " + path);
  std::vector<Tokens> out;
  for (std::string line; std::getline(in, line);) out.push_back(split_tokens(line));
  return out;
}

void append_header(std::string& out, const RunConfig& config) {
  out += "# build " + std::string(build_id()) + "\n";
  std::istringstream lines(config.to_text());
  std::string line;
  while (std::getline(lines, line)) out += "# config " + line + "\n";
}

}  // namespace

DecodingModel DecodingModel::load(const RunConfig& config) {
  require(!config.checkpoint.empty(), ErrorKind::kConfig, "no checkpoint given");
  require(!config.vocab.empty(), ErrorKind::kConfig, "no vocabulary given");
  const auto ckpt_path = config.resolve(config.checkpoint);
  const auto ckpt = Checkpoint::load(ckpt_path);
  DecodingModel out;
  out.vocab = Vocabulary::load(config.resolve(config.vocab));
  require(out.vocab.size() == ckpt.model.vocab_size, ErrorKind::kConfig,
          "vocabulary has " + std::to_string(out.vocab.size()) + " entries, checkpoint expects " +
              std::to_string(ckpt.model.vocab_size));
  out.model = std::make_unique<Transformer>(ckpt.model, ckpt.config.seed);
  restore_params(ckpt, out.model->params());
  // Decoding settings come from the caller; the architecture from the checkpoint.
  out.config = config;
  out.config.model = ckpt.model;
  if (uses_memory(ckpt.model.mode)) {
    const auto mem_path = memory_path(ckpt_path);
    require(fs::exists(mem_path), ErrorKind::kConfig,
            std::string("mode ") + mode_name(ckpt.model.mode) + " needs the memory file " +
                mem_path);
    out.memory = RuleMemory::load(mem_path);
    out.index = load_rule_index(config);
    require(out.index != nullptr, ErrorKind::kConfig,
            std::string("mode ") + mode_name(ckpt.model.mode) + " needs a rulebase");
  }
  return out;
}

Tokens DecodingModel::decode(std::span<const std::string> source, const EntityMap* entities) const {
  auto tokens = decode_sentence(*model, vocab, memory ? &*memory : nullptr, index.get(), source,
                                config);
  if (entities && config.restore_entities) tokens = restore_entities(tokens, *entities);
  return tokens;
}

std::string format_preprocess_stats(const PreprocessStats& s) {
  return "pairs\t" + std::to_string(s.pairs) + "\n" + "vocab_size\t" +
         std::to_string(s.vocab_size) + "\n" + "tokens\t" + std::to_string(s.tokens) + "\n" +
         "unk_tokens\t" + std::to_string(s.unk_tokens) + "\n" + "unk_rate\t" +
         number(s.unk_rate) + "\n" + "truncated\t" + std::to_string(s.truncated) + "\n" +
         "entities\t" + std::to_string(s.entities) + "\n";
}

PreprocessStats run_preprocess(const RunConfig& config, const PreprocessRequest& request) {
  require(!request.out_dir.empty(), ErrorKind::kConfig, "no output directory given");
  LoadOptions raw;
  raw.max_length = 0;
  const auto pairs =
      load_parallel(config.resolve(request.normal), config.resolve(request.simple), raw);

  std::vector<std::vector<EntitySpan>> normal_spans(pairs.size()), simple_spans(pairs.size());
  if (!request.normal_entities.empty()) {
    normal_spans = load_annotations(config.resolve(request.normal_entities), pairs.size());
  }
  if (!request.simple_entities.empty()) {
    simple_spans = load_annotations(config.resolve(request.simple_entities), pairs.size());
  }

  PreprocessStats stats;
  std::vector<SentencePair> anonymized;
  std::vector<EntityMap> maps;
  anonymized.reserve(pairs.size());
  const std::size_t limit = config.model.max_length;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    AnonymizedPair a;
    try {
      a = anonymize_entities(pairs[i], {normal_spans[i], simple_spans[i]});
    } catch (const Error& e) {
      fail(e.kind(), "pair " + std::to_string(i + 1) + ": " + e.what());
    }
    for (Tokens* side : {&a.pair.normal, &a.pair.simple}) {
      if (limit > 0 && side->size() > limit) {
        side->resize(limit);
        ++stats.truncated;
      }
    }
    stats.entities += a.entities.size();
    anonymized.push_back(std::move(a.pair));
    maps.push_back(std::move(a.entities));
  }
  if (stats.truncated > 0) {
    log_warning("truncated " + std::to_string(stats.truncated) + " sentences to " +
                std::to_string(limit) + " tokens");
  }

  fs::create_directories(request.out_dir);
  const fs::path dir(request.out_dir);
  Vocabulary vocab;
  if (request.vocab.empty()) {
    vocab = Vocabulary::build(anonymized, config.min_count);
    vocab.save((dir / "vocab.tsv").string());
  } else {
    vocab = Vocabulary::load(config.resolve(request.vocab));
  }

  for (const auto& p : anonymized) {
    for (const auto* side : {&p.normal, &p.simple}) {
      for (const int id : vocab.encode(*side)) {
        if (id == Vocabulary::kEos) continue;
        ++stats.tokens;
        stats.unk_tokens += id == Vocabulary::kUnk;
      }
    }
  }
  stats.pairs = anonymized.size();
  stats.vocab_size = vocab.size();
  stats.unk_rate = stats.tokens == 0 ? 0.0
                                     : static_cast<double>(stats.unk_tokens) /
                                           static_cast<double>(stats.tokens);

  std::vector<Tokens> normal, simple;
  for (const auto& p : anonymized) {
    normal.push_back(p.normal);
    simple.push_back(p.simple);
  }
  write_sentences((dir / (request.prefix + ".normal")).string(), normal);
  write_sentences((dir / (request.prefix + ".simple")).string(), simple);
  save_entity_maps((dir / (request.prefix + ".entities")).string(), maps);
  write_text((dir / (request.prefix + ".stats.tsv")).string(), format_preprocess_stats(stats));
  return stats;
}

std::string format_train_summary(const TrainSummary& s) {
  return "steps\t" + std::to_string(s.steps) + "\n" + "final_loss\t" + number(s.final_loss) +
         "\n" + "token_accuracy\t" + number(s.token_accuracy) + "\n" + "memory_rules\t" +
         std::to_string(s.memory_rules) + "\n";
}

TrainSummary run_train(const RunConfig& input) {
  RunConfig config = input;
  config.validate();
  require(!config.train_normal.empty() && !config.train_simple.empty(), ErrorKind::kConfig,
          "train_normal and train_simple are required");
  LoadStats load_stats;
  const auto pairs = load_parallel(config.resolve(config.train_normal),
                                   config.resolve(config.train_simple), load_options(config),
                                   &load_stats);

  Vocabulary vocab;
  const auto vocab_path = config.resolve(config.vocab);
  if (!vocab_path.empty() && fs::exists(vocab_path)) {
    vocab = Vocabulary::load(vocab_path);
  } else {
    vocab = Vocabulary::build(pairs, config.min_count);
    if (!vocab_path.empty()) vocab.save(vocab_path);
  }

  const auto index = load_rule_index(config);
  auto examples = prepare_examples(pairs, vocab, index.get());
  config.checkpoint = config.resolve(config.checkpoint);
  config.log = config.resolve(config.log);
  Trainer trainer(config, vocab, std::move(examples), index.get());

  if (!config.embeddings.empty()) {
    Rng rng(config.seed);
    const auto loaded =
        load_embeddings(config.resolve(config.embeddings), vocab, config.model.d_model, rng);
    log_info("embedding coverage " + number(loaded.coverage));
    for (Tensor* table : {&trainer.model().params().source_embedding,
                          &trainer.model().params().target_embedding}) {
      std::copy(loaded.table.data().begin(), loaded.table.data().end(),
                table->mutable_data().begin());
    }
  }

  const auto validation = load_validation(config);
  TrainSummary summary;
  summary.logs = trainer.train(validation ? &*validation : nullptr);
  summary.steps = trainer.steps_done();
  for (auto it = summary.logs.rbegin(); it != summary.logs.rend(); ++it) {
    if (it->phase == Phase::kSequence) {
      summary.final_loss = it->loss;
      break;
    }
  }
  summary.token_accuracy = trainer.token_accuracy();
  summary.memory_rules = trainer.memory().rule_count();
  return summary;
}

std::vector<std::string> run_decode(const RunConfig& config, const std::string& input,
                                    const std::string& entities) {
  const auto loaded = DecodingModel::load(config);
  const auto sources = load_lines(config.resolve(input));
  std::vector<EntityMap> maps;
  if (!entities.empty()) maps = load_entity_maps(config.resolve(entities), sources.size());

  std::vector<std::string> lines;
  lines.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    lines.push_back(join_tokens(loaded.decode(sources[i], maps.empty() ? nullptr : &maps[i])));
  }
  if (!config.output.empty()) {
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_text(config.resolve(config.output), text);
  }
  return lines;
}

std::vector<EvalReport> run_evaluate(const RunConfig& config, const std::string& source,
                                     std::span<const SystemOutput> systems,
                                     std::span<const std::string> references) {
  require(!references.empty(), ErrorKind::kConfig, "at least one reference file is needed");
  const auto sources = load_lines(config.resolve(source));
  std::vector<std::vector<Tokens>> refs(sources.size());
  for (const auto& path : references) {
    const auto lines = load_lines(config.resolve(path));
    require(lines.size() == sources.size(), ErrorKind::kAlignment,
            path + " has " + std::to_string(lines.size()) + " lines, source has " +
                std::to_string(sources.size()));
    for (std::size_t i = 0; i < lines.size(); ++i) refs[i].push_back(lines[i]);
  }
  const auto index = load_rule_index(config);
  SariOptions options;
  options.deletion_precision_only = config.deletion_precision_only;

  std::vector<EvalReport> reports;
  for (const auto& system : systems) {
    const auto outputs = load_outputs(config.resolve(system.path));
    require(outputs.size() == sources.size(), ErrorKind::kAlignment,
            system.path + " has " + std::to_string(outputs.size()) + " lines, source has " +
                std::to_string(sources.size()));
    reports.push_back(
        evaluate_corpus(system.name, sources, outputs, refs, index.get(), options));
  }
  return reports;
}

std::vector<EvalReport> run_ablation(const RunConfig& input, const AblationGrid& grid) {
  RunConfig base = input;
  const auto validation = load_validation(base);
  require(validation.has_value(), ErrorKind::kConfig,
          "ablation needs valid_normal and valid_refs");
  const auto pairs = load_parallel(base.resolve(base.train_normal),
                                   base.resolve(base.train_simple), load_options(base));
  const auto vocab = Vocabulary::build(pairs, base.min_count);
  const auto index = load_rule_index(base);
  const auto examples = prepare_examples(pairs, vocab, index.get());
  SariOptions options;
  options.deletion_precision_only = base.deletion_precision_only;

  std::vector<EvalReport> reports;
  for (const std::size_t layers : grid.layers) {
    for (const std::size_t heads : grid.heads) {
      RunConfig cell = base;
      cell.model.layers = layers;
      cell.model.heads = heads;
      cell.model.memory_layer = std::min(cell.model.memory_layer, layers);
      cell.checkpoint.clear();
      cell.log.clear();
      Trainer trainer(cell, vocab, examples, index.get());
      trainer.train();
      const bool memory = uses_memory(cell.model.mode);
      for (const std::size_t beam : grid.beams) {
        RunConfig decode_config = cell;
        decode_config.beam_size = beam;
        std::vector<Tokens> outputs;
        for (const auto& s : validation->sources) {
          outputs.push_back(decode_sentence(trainer.model(), vocab,
                                            memory ? &trainer.memory() : nullptr,
                                            memory ? index.get() : nullptr, s, decode_config));
        }
        std::string name = "L" + std::to_string(layers) + "H" + std::to_string(heads);
        if (grid.beams.size() > 1 || beam > 1) name += " beam=" + std::to_string(beam);
        reports.push_back(evaluate_corpus(name, validation->sources, outputs,
                                          validation->references, index.get(), options));
      }
    }
  }
  return reports;
}

std::string render_report_tsv(const RunConfig& config, std::span<const EvalReport> reports) {
  std::string out;
  append_header(out, config);
  out += report_tsv_header() + "\n";
  for (const auto& r : reports) out += report_tsv_row(r) + "\n";
  return out;
}

std::string render_report_table(const RunConfig& config, std::span<const EvalReport> reports) {
  std::string out;
  append_header(out, config);
  out += report_table(reports);
  return out;
}

void write_reports(const RunConfig& config, std::span<const EvalReport> reports) {
  if (config.output.empty()) return;
  const auto base = config.resolve(config.output);
  write_text(base + ".tsv", render_report_tsv(config, reports));
  write_text(base + ".txt", render_report_table(config, reports));
}

}  // namespace kas
