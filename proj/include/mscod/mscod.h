#ifndef MSCOD_H
#define MSCOD_H

/* C interface to the pocket-conditioned generator. All functions are
 * thread-safe with respect to distinct handles; on failure they return a
 * non-zero status and mscod_last_error() describes it (per thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MSCOD_BUILDING)
#    define MSCOD_API __declspec(dllexport)
#  else
#    define MSCOD_API __declspec(dllimport)
#  endif
#else
#  define MSCOD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mscod_status {
  MSCOD_OK = 0,
  MSCOD_ERR_USAGE = 1,     /* bad argument, config key or value */
  MSCOD_ERR_NUMERIC = 2,   /* NaN/Inf during training or sampling */
  MSCOD_ERR_CHECK = 3,     /* a property suite failed */
  MSCOD_ERR_IO = 4,
  MSCOD_ERR_FORMAT = 5,    /* malformed complex, checkpoint or manifest */
  MSCOD_ERR_DIMENSION = 6, /* mismatched sizes */
  MSCOD_ERR_INTERNAL = 7
} mscod_status;

typedef struct mscod_model mscod_model;
typedef struct mscod_complex mscod_complex;

/* Receives one progress/report line at a time, without newline. */
typedef void (*mscod_line_fn)(const char* line, void* user);

MSCOD_API const char* mscod_version(void);
MSCOD_API const char* mscod_last_error(void);
/* Every config key with its default, one per line. */
MSCOD_API const char* mscod_config_help(void);

/* Pipeline commands driven by a `key = value` config file. */
MSCOD_API mscod_status mscod_gen_data(const char* config_path, mscod_line_fn line, void* user);
MSCOD_API mscod_status mscod_train(const char* config_path, mscod_line_fn line, void* user);

MSCOD_API mscod_status mscod_model_load(const char* checkpoint_path, mscod_model** out);
MSCOD_API void mscod_model_free(mscod_model* model);
MSCOD_API size_t mscod_model_hidden_dim(const mscod_model* model);
MSCOD_API size_t mscod_model_layers(const mscod_model* model);
MSCOD_API size_t mscod_model_heads(const mscod_model* model);
/* Number of MHCA blocks (0 when cross-attention is disabled). */
MSCOD_API size_t mscod_model_attention_blocks(const mscod_model* model);

MSCOD_API mscod_status mscod_complex_read(const char* path, mscod_complex** out);
MSCOD_API void mscod_complex_free(mscod_complex* c);
MSCOD_API size_t mscod_complex_num_protein(const mscod_complex* c);
MSCOD_API size_t mscod_complex_num_ligand(const mscod_complex* c);
/* Copies ligand coordinates (3 per atom) and type indices; either may be NULL. */
MSCOD_API mscod_status mscod_complex_ligand(const mscod_complex* c, double* xyz, int* types);

/* Writes `count` molecules sample_NNNN.txt into out_dir. n_atoms must be >= 1.
 * With write_trace != 0 a per-step sample_NNNN.trace.tsv is written too. */
MSCOD_API mscod_status mscod_sample(const mscod_model* model, const mscod_complex* pocket, size_t n_atoms,
                                    size_t count, uint64_t seed, size_t threads, const char* out_dir,
                                    int write_trace, mscod_line_fn line, void* user);

/* Scores every sample_*.txt in samples_dir against the reference ligand and
 * emits the tab-separated report through `line`. Aggregates are optional. */
MSCOD_API mscod_status mscod_eval(const char* samples_dir, const mscod_complex* reference, double rmsd_cutoff,
                                  double clash_threshold, mscod_line_fn line, void* user,
                                  double* rmsd_pass_rate, double* clash_free_rate);

/* level: "quick" or "full". Returns MSCOD_ERR_CHECK when any suite fails. */
MSCOD_API mscod_status mscod_check(const char* level, mscod_line_fn line, void* user);

/* Attention of one head in one MHCA block, rows = protein atoms, columns =
 * ligand atoms, row-major into `out` (capacity in doubles). Sizes are
 * reported even when the buffer is too small (status MSCOD_ERR_DIMENSION). */
MSCOD_API mscod_status mscod_attention_map(const mscod_model* model, const mscod_complex* c, size_t block,
                                           size_t head, double t, double* out, size_t capacity, size_t* rows,
                                           size_t* cols);

#ifdef __cplusplus
}
#endif

#endif
