#include "kasimp/kasimp.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <new>
#include <string>

#include "kasimp/commands.hpp"
#include "kasimp/config.hpp"
#include "kasimp/error.hpp"
#include "kasimp/log.hpp"
#include "kasimp/metrics.hpp"

struct kas_config {
  kas::RunConfig config;
};

struct kas_model {
  kas::DecodingModel model;
};

namespace {

thread_local std::string t_last_error;

kas_status status_of(kas::ErrorKind kind) {
  switch (kind) {
    case kas::ErrorKind::kDimension: return KAS_ERR_DIMENSION;
    case kas::ErrorKind::kNumeric: return KAS_ERR_NUMERIC;
    case kas::ErrorKind::kIndex: return KAS_ERR_INDEX;
    case kas::ErrorKind::kContract: return KAS_ERR_CONTRACT;
    case kas::ErrorKind::kCorpus: return KAS_ERR_CORPUS;
    case kas::ErrorKind::kAnnotation: return KAS_ERR_ANNOTATION;
    case kas::ErrorKind::kAlignment: return KAS_ERR_ALIGNMENT;
    case kas::ErrorKind::kFormat: return KAS_ERR_FORMAT;
    case kas::ErrorKind::kIo: return KAS_ERR_IO;
    case kas::ErrorKind::kConfig: return KAS_ERR_CONFIG;
    case kas::ErrorKind::kCheck: return KAS_ERR_CHECK;
  }
  return KAS_ERR_INTERNAL;
}

template <typename F>
kas_status guarded(F&& f) {
  try {
    t_last_error.clear();
    f();
    return KAS_OK;
  } catch (const kas::Error& e) {
    t_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    t_last_error = "out of memory";
    return KAS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return KAS_ERR_INTERNAL;
  }
}

kas_status bad_argument(const char* what) {
  t_last_error = std::string("invalid argument: ") + what;
  return KAS_ERR_ARGUMENT;
}

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string opt(const char* s) { return s ? s : ""; }

}  // namespace

extern "C" {

const char* kas_version(void) { return "0.1.0"; }

const char* kas_build_id(void) { return kas::build_id(); }

const char* kas_status_name(kas_status status) {
  switch (status) {
    case KAS_OK: return "ok";
    case KAS_ERR_DIMENSION: return "dimension error";
    case KAS_ERR_NUMERIC: return "numeric error";
    case KAS_ERR_INDEX: return "index error";
    case KAS_ERR_CONTRACT: return "contract violation";
    case KAS_ERR_CORPUS: return "corpus error";
    case KAS_ERR_ANNOTATION: return "annotation error";
    case KAS_ERR_ALIGNMENT: return "alignment error";
    case KAS_ERR_FORMAT: return "format error";
    case KAS_ERR_IO: return "i/o error";
    case KAS_ERR_CONFIG: return "configuration error";
    case KAS_ERR_CHECK: return "check failed";
    case KAS_ERR_ARGUMENT: return "invalid argument";
    case KAS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* kas_last_error(void) { return t_last_error.c_str(); }

void kas_string_free(char* s) { std::free(s); }

void kas_set_verbose(int verbose) { kas::set_log_verbose(verbose != 0); }

kas_status kas_config_new(kas_config** out) {
  if (!out) return bad_argument("out is null");
  return guarded([&] { *out = new kas_config(); });
}

void kas_config_free(kas_config* config) { delete config; }

kas_status kas_config_set(kas_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return bad_argument("config, key and value are required");
  return guarded([&] { config->config.set(key, value); });
}

kas_status kas_config_get(const kas_config* config, const char* key, char** out) {
  if (!config || !key || !out) return bad_argument("config, key and out are required");
  return guarded([&] { *out = copy_out(config->config.get(key)); });
}

kas_status kas_config_load_file(kas_config* config, const char* path) {
  if (!config || !path) return bad_argument("config and path are required");
  return guarded([&] { config->config.load_file(path); });
}

kas_status kas_config_to_text(const kas_config* config, char** out) {
  if (!config || !out) return bad_argument("config and out are required");
  return guarded([&] { *out = copy_out(config->config.to_text()); });
}

kas_status kas_config_validate(const kas_config* config) {
  if (!config) return bad_argument("config is null");
  return guarded([&] { config->config.validate(); });
}

kas_status kas_config_keys(char** out) {
  if (!out) return bad_argument("out is null");
  return guarded([&] {
    std::string text;
    for (const auto& k : kas::RunConfig::keys()) text += k + "\n";
    *out = copy_out(text);
  });
}

kas_status kas_preprocess(const kas_config* config, const char* normal, const char* simple,
                          const char* normal_entities, const char* simple_entities,
                          const char* out_dir, const char* prefix, const char* vocab,
                          char** stats) {
  if (!config || !normal || !simple || !out_dir) {
    return bad_argument("config, normal, simple and out_dir are required");
  }
  return guarded([&] {
    kas::PreprocessRequest request;
    request.normal = normal;
    request.simple = simple;
    request.normal_entities = opt(normal_entities);
    request.simple_entities = opt(simple_entities);
    request.out_dir = out_dir;
    if (prefix && *prefix) request.prefix = prefix;
    request.vocab = opt(vocab);
    const auto result = kas::run_preprocess(config->config, request);
    if (stats) *stats = copy_out(kas::format_preprocess_stats(result));
  });
}

kas_status kas_train(const kas_config* config, char** summary) {
  if (!config) return bad_argument("config is null");
  return guarded([&] {
    const auto result = kas::run_train(config->config);
    if (summary) *summary = copy_out(kas::format_train_summary(result));
  });
}

kas_status kas_decode_file(const kas_config* config, const char* input, const char* entities,
                           char** output) {
  if (!config || !input) return bad_argument("config and input are required");
  return guarded([&] {
    const auto lines = kas::run_decode(config->config, input, opt(entities));
    if (output) {
      std::string text;
      for (const auto& l : lines) text += l + "\n";
      *output = copy_out(text);
    }
  });
}

kas_status kas_evaluate(const kas_config* config, const char* source,
                        const char* const* system_names, const char* const* system_paths,
                        size_t system_count, const char* const* references,
                        size_t reference_count, char** tsv, char** table) {
  if (!config || !source || (system_count > 0 && !system_paths) ||
      (reference_count > 0 && !references)) {
    return bad_argument("config, source, system paths and references are required");
  }
  return guarded([&] {
    std::vector<kas::SystemOutput> systems;
    for (size_t i = 0; i < system_count; ++i) {
      const std::string path = system_paths[i];
      const std::string name =
          system_names && system_names[i] ? system_names[i] : std::filesystem::path(path).stem().string();
      systems.push_back({name, path});
    }
    const std::vector<std::string> refs(references, references + reference_count);
    const auto reports = kas::run_evaluate(config->config, source, systems, refs);
    kas::write_reports(config->config, reports);
    if (tsv) *tsv = copy_out(kas::render_report_tsv(config->config, reports));
    if (table) *table = copy_out(kas::render_report_table(config->config, reports));
  });
}

kas_status kas_ablate(const kas_config* config, const size_t* layers, size_t layer_count,
                      const size_t* heads, size_t head_count, const size_t* beams,
                      size_t beam_count, char** tsv, char** table) {
  if (!config) return bad_argument("config is null");
  return guarded([&] {
    kas::AblationGrid grid;
    if (layers && layer_count) grid.layers.assign(layers, layers + layer_count);
    if (heads && head_count) grid.heads.assign(heads, heads + head_count);
    if (beams && beam_count) grid.beams.assign(beams, beams + beam_count);
    const auto reports = kas::run_ablation(config->config, grid);
    kas::write_reports(config->config, reports);
    if (tsv) *tsv = copy_out(kas::render_report_tsv(config->config, reports));
    if (table) *table = copy_out(kas::render_report_table(config->config, reports));
  });
}

kas_status kas_model_load(const kas_config* config, kas_model** out) {
  if (!config || !out) return bad_argument("config and out are required");
  return guarded([&] { *out = new kas_model{kas::DecodingModel::load(config->config)}; });
}

void kas_model_free(kas_model* model) { delete model; }

kas_status kas_model_decode(const kas_model* model, const char* sentence, char** out) {
  if (!model || !sentence || !out) return bad_argument("model, sentence and out are required");
  return guarded([&] {
    const auto tokens = model->model.decode(kas::split_tokens(sentence));
    *out = copy_out(kas::join_tokens(tokens));
  });
}

kas_status kas_sari(const char* source, const char* output, const char* const* references,
                    size_t reference_count, double* sari, double* add, double* del,
                    double* keep) {
  if (!source || !output || (reference_count > 0 && !references)) {
    return bad_argument("source, output and references are required");
  }
  return guarded([&] {
    std::vector<kas::Tokens> refs;
    for (size_t i = 0; i < reference_count; ++i) refs.push_back(kas::split_tokens(references[i]));
    const auto s = kas::split_tokens(source);
    const auto o = kas::split_tokens(output);
    const auto r = kas::sari(s, o, refs);
    if (sari) *sari = r.sari;
    if (add) *add = r.f_add;
    if (del) *del = r.f_delete;
    if (keep) *keep = r.f_keep;
  });
}

kas_status kas_fkgl(const char* const* sentences, size_t count, double* fkgl, double* wlen,
                    double* slen) {
  if (count > 0 && !sentences) return bad_argument("sentences is null");
  return guarded([&] {
    std::vector<kas::Tokens> corpus;
    for (size_t i = 0; i < count; ++i) corpus.push_back(kas::split_tokens(sentences[i]));
    const auto r = kas::fkgl(corpus);
    if (fkgl) *fkgl = r.fkgl;
    if (wlen) *wlen = r.wlen;
    if (slen) *slen = r.slen;
  });
}

}  // extern "C"
