#ifndef KASIMP_KASIMP_H
#define KASIMP_KASIMP_H

/*
 * kasimp: knowledge-augmented sentence simplification.
 *
 * Every function that can fail returns a kas_status. On failure the message
 * is available from kas_last_error() until the next call on the same thread.
 * Strings returned through char** out-parameters are owned by the caller and
 * released with kas_string_free().
 */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(KASIMP_BUILDING)
#    define KASIMP_API __declspec(dllexport)
#  else
#    define KASIMP_API __declspec(dllimport)
#  endif
#else
#  define KASIMP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kas_status {
  KAS_OK = 0,
  KAS_ERR_DIMENSION = 1,
  KAS_ERR_NUMERIC = 2,
  KAS_ERR_INDEX = 3,
  KAS_ERR_CONTRACT = 4,
  KAS_ERR_CORPUS = 5,
  KAS_ERR_ANNOTATION = 6,
  KAS_ERR_ALIGNMENT = 7,
  KAS_ERR_FORMAT = 8,
  KAS_ERR_IO = 9,
  KAS_ERR_CONFIG = 10,
  KAS_ERR_CHECK = 11,
  KAS_ERR_ARGUMENT = 12,
  KAS_ERR_INTERNAL = 13
} kas_status;

typedef struct kas_config kas_config;
typedef struct kas_model kas_model;

KASIMP_API const char* kas_version(void);
/* `git describe` of the source tree at configure time. */
KASIMP_API const char* kas_build_id(void);
KASIMP_API const char* kas_status_name(kas_status status);
KASIMP_API const char* kas_last_error(void);
KASIMP_API void kas_string_free(char* s);
/* Info-level progress messages go to stderr when enabled. */
KASIMP_API void kas_set_verbose(int verbose);

/* --- configuration --- */

KASIMP_API kas_status kas_config_new(kas_config** out);
KASIMP_API void kas_config_free(kas_config* config);
KASIMP_API kas_status kas_config_set(kas_config* config, const char* key, const char* value);
KASIMP_API kas_status kas_config_get(const kas_config* config, const char* key, char** out);
/* Flat key=value file; later calls override earlier values. */
KASIMP_API kas_status kas_config_load_file(kas_config* config, const char* path);
KASIMP_API kas_status kas_config_to_text(const kas_config* config, char** out);
KASIMP_API kas_status kas_config_validate(const kas_config* config);
/* Newline-separated list of every accepted key. */
KASIMP_API kas_status kas_config_keys(char** out);

/* --- commands --- */

/*
 * Anonymizes entities, builds (or reuses) the vocabulary and writes the
 * processed corpus to out_dir. Entity sidecars, prefix and vocab may be NULL.
 * `stats` receives "name<TAB>value" lines.
 */
KASIMP_API kas_status kas_preprocess(const kas_config* config, const char* normal,
                                     const char* simple, const char* normal_entities,
                                     const char* simple_entities, const char* out_dir,
                                     const char* prefix, const char* vocab, char** stats);

KASIMP_API kas_status kas_train(const kas_config* config, char** summary);

/* One output line per input line; entities may be NULL. */
KASIMP_API kas_status kas_decode_file(const kas_config* config, const char* input,
                                      const char* entities, char** output);

KASIMP_API kas_status kas_evaluate(const kas_config* config, const char* source,
                                   const char* const* system_names,
                                   const char* const* system_paths, size_t system_count,
                                   const char* const* references, size_t reference_count,
                                   char** tsv, char** table);

KASIMP_API kas_status kas_ablate(const kas_config* config, const size_t* layers,
                                 size_t layer_count, const size_t* heads, size_t head_count,
                                 const size_t* beams, size_t beam_count, char** tsv,
                                 char** table);

/* --- models --- */

KASIMP_API kas_status kas_model_load(const kas_config* config, kas_model** out);
KASIMP_API void kas_model_free(kas_model* model);
KASIMP_API kas_status kas_model_decode(const kas_model* model, const char* sentence, char** out);

/* --- metrics --- */

KASIMP_API kas_status kas_sari(const char* source, const char* output,
                               const char* const* references, size_t reference_count,
                               double* sari, double* add, double* del, double* keep);

KASIMP_API kas_status kas_fkgl(const char* const* sentences, size_t count, double* fkgl,
                               double* wlen, double* slen);

#ifdef __cplusplus
}
#endif

#endif
