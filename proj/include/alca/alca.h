/*
 * alca — adaptive local-component-aware graph convolutional action
 * recognition, one-shot metric learning on 3-d skeleton sequences.
 *
 * C interface of the shared library. All heavyweight state lives behind
 * opaque handles; every fallible call returns an alca_status and leaves a
 * human-readable message in alca_last_error() (thread-local). Strings
 * returned through char** are heap-allocated and must be released with
 * alca_string_free().
 *
 * Configuration is JSON text. alca_config_resolve() merges the built-in
 * defaults, an optional config file body and "dotted.path=value" overrides
 * (later wins), rejects unknown keys, and returns the effective config that
 * the other entry points expect.
 */

#ifndef ALCA_H
#define ALCA_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum alca_status {
  ALCA_OK = 0,
  ALCA_ERR_CONFIG = 1, /* invalid configuration or arguments */
  ALCA_ERR_DATA = 2,   /* unreadable, malformed or inconsistent data */
  ALCA_ERR_RUNTIME = 3 /* numeric failure or internal error */
} alca_status;

typedef struct alca_dataset alca_dataset;

const char* alca_version(void);

/* Message for the most recent failing call on this thread. */
const char* alca_last_error(void);

void alca_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Configuration                                                       */
/* ------------------------------------------------------------------ */

/* Built-in defaults as JSON. */
alca_status alca_config_defaults(char** out_json);

alca_status alca_config_resolve(const char* file_json_or_null,
                                const char* const* overrides, int n_overrides,
                                char** out_effective_json);

/* ------------------------------------------------------------------ */
/* Datasets                                                            */
/* ------------------------------------------------------------------ */

/* Procedural dataset from the "synth" section of the config. */
alca_status alca_dataset_synth(const char* config_json, alca_dataset** out);

alca_status alca_dataset_load(const char* path, alca_dataset** out);
alca_status alca_dataset_save(const alca_dataset* dataset, const char* path);

/*
 * Parse every *.skeleton file under input_dir (class ids from the file
 * names), apply frontal alignment and length normalization per the config,
 * and collect the result. out_report_json lists per-file outcomes and
 * warnings. Without skip_bad in config.prep, the first bad file fails the
 * call.
 */
alca_status alca_dataset_prep_dir(const char* input_dir,
                                  const char* config_json, alca_dataset** out,
                                  char** out_report_json);

int32_t alca_dataset_num_sequences(const alca_dataset* dataset);
int32_t alca_dataset_num_classes(const alca_dataset* dataset);
void alca_dataset_free(alca_dataset* dataset);

/* ------------------------------------------------------------------ */
/* Training / evaluation / verification                                */
/* ------------------------------------------------------------------ */

/*
 * Train per config.train on the auxiliary portion of the dataset. Writes the
 * best checkpoint to checkpoint_path and one JSON record per epoch (after a
 * leading config record) to metrics_path. out_summary_json reports the best
 * epoch, accuracy and early-stop information.
 */
alca_status alca_train(const char* config_json, const alca_dataset* dataset,
                       const char* checkpoint_path, const char* metrics_path,
                       char** out_summary_json);

/* One-shot evaluation of a checkpoint on the dataset's evaluation classes. */
alca_status alca_evaluate(const char* config_json, const alca_dataset* dataset,
                          const char* checkpoint_path, char** out_report_json);

/* Comparing-unit representation of one sequence under a checkpoint, as JSON
 * (unit layout, validity and the flat embedding values). */
alca_status alca_represent(const char* config_json, const alca_dataset* dataset,
                           int32_t sequence_index, const char* checkpoint_path,
                           char** out_json);

/* Finite-difference verification of all gradients (double precision). Fails
 * with ALCA_ERR_RUNTIME when any case exceeds its tolerance. */
alca_status alca_gradcheck(const char* config_json, char** out_report_json);

/*
 * The component-ablation grid: the full model plus the seven single-component
 * variants (sampling strategy, unit division, constraints), each trained and
 * evaluated on the given dataset. Writes one CSV row per variant to csv_path.
 */
alca_status alca_ablate(const char* config_json, const alca_dataset* dataset,
                        const char* csv_path, char** out_summary_json);

#ifdef __cplusplus
}
#endif

#endif /* ALCA_H */
