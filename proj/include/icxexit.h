/*
 * SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

/* C interface to the icxexit library: synthetic-prior training, entropy
 * gated early-exit inference and cross-validated threshold sweeps.
 *
 * Every function returns an icx_status. On failure a message describing the
 * error is available from icx_last_error() until the next call on the same
 * thread. Handles are opaque and must be released with their _destroy
 * function; strings returned through char** are released with
 * icx_string_free. */

#ifndef ICXEXIT_H
#define ICXEXIT_H

#include <stddef.h>
#include <stdint.h>

#ifndef ICX_EXPORT
#define ICX_EXPORT __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum icx_status {
  ICX_OK = 0,
  ICX_ERR_CONFIG = 2,
  ICX_ERR_INGESTION = 3,
  ICX_ERR_NUMERIC = 4,
  ICX_ERR_PARTIAL = 5,
  ICX_ERR_DIMENSION = 10,
  ICX_ERR_CONTRACT = 11,
  ICX_ERR_CAPACITY = 12,
  ICX_ERR_IO = 13,
  ICX_ERR_INVALID_ARGUMENT = 14,
  ICX_ERR_INTERNAL = 15
} icx_status;

typedef struct icx_config icx_config;
typedef struct icx_model icx_model;
typedef struct icx_dataset icx_dataset;
typedef struct icx_exit_report icx_exit_report;

/* Receives (stage, step, mean loss); stage 0 = backbone, 1 = decoders. */
typedef void (*icx_progress_fn)(int stage, size_t step, double loss, void* user);

ICX_EXPORT const char* icx_last_error(void);
ICX_EXPORT const char* icx_version(void);
ICX_EXPORT void icx_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

ICX_EXPORT icx_status icx_config_create(icx_config** out);
ICX_EXPORT void icx_config_destroy(icx_config* config);
ICX_EXPORT icx_status icx_config_load_file(icx_config* config, const char* path);
ICX_EXPORT icx_status icx_config_set(icx_config* config, const char* key, const char* value);
ICX_EXPORT icx_status icx_config_set_seed(icx_config* config, uint64_t seed);
ICX_EXPORT icx_status icx_config_get(const icx_config* config, const char* key, char** out);
/* Checks every value; the resolved text is what output directories record. */
ICX_EXPORT icx_status icx_config_validate(const icx_config* config);
ICX_EXPORT icx_status icx_config_render(const icx_config* config, char** out);
ICX_EXPORT icx_status icx_config_write(const icx_config* config, const char* out_dir);

/* ---- prior ------------------------------------------------------------ */

/* Writes task_{i}.csv for i in [0, count) into out_dir. */
ICX_EXPORT icx_status icx_prior_sample(const icx_config* config, size_t count, const char* out_dir,
                                       char** summary);

/* ---- model ------------------------------------------------------------ */

ICX_EXPORT icx_status icx_model_train(const icx_config* config, icx_progress_fn progress, void* user,
                                      icx_model** out, char** summary);
ICX_EXPORT icx_status icx_model_load(const char* path, icx_model** out);
ICX_EXPORT icx_status icx_model_save(const icx_model* model, const char* path);
ICX_EXPORT void icx_model_destroy(icx_model* model);
ICX_EXPORT size_t icx_model_n_layers(const icx_model* model);
ICX_EXPORT size_t icx_model_max_features(const icx_model* model);
ICX_EXPORT size_t icx_model_max_classes(const icx_model* model);

/* ---- datasets --------------------------------------------------------- */

ICX_EXPORT icx_status icx_dataset_load_csv(const char* path, const char* label_column, icx_dataset** out);
ICX_EXPORT void icx_dataset_destroy(icx_dataset* dataset);
ICX_EXPORT size_t icx_dataset_rows(const icx_dataset* dataset);
ICX_EXPORT size_t icx_dataset_features(const icx_dataset* dataset);
ICX_EXPORT size_t icx_dataset_classes(const icx_dataset* dataset);
ICX_EXPORT size_t icx_dataset_dropped_rows(const icx_dataset* dataset);

/* ---- inference -------------------------------------------------------- */

/* Seeded train/test split of the dataset, then early-exit prediction at
 * threshold tau (nats). trace_only runs the full pass. */
ICX_EXPORT icx_status icx_infer(const icx_model* model, const icx_dataset* dataset, const icx_config* config,
                                double tau, int trace_only, icx_exit_report** out);
ICX_EXPORT void icx_exit_report_destroy(icx_exit_report* report);
ICX_EXPORT size_t icx_exit_report_exit_layer(const icx_exit_report* report);
ICX_EXPORT size_t icx_exit_report_decode_count(const icx_exit_report* report);
ICX_EXPORT double icx_exit_report_elapsed(const icx_exit_report* report);
ICX_EXPORT size_t icx_exit_report_n_test(const icx_exit_report* report);
ICX_EXPORT size_t icx_exit_report_n_classes(const icx_exit_report* report);
/* Row-major [n_test x n_classes]; valid while the report lives. */
ICX_EXPORT const double* icx_exit_report_probs(const icx_exit_report* report);
ICX_EXPORT size_t icx_exit_report_trace_length(const icx_exit_report* report);
ICX_EXPORT const double* icx_exit_report_trace(const icx_exit_report* report);
/* Human-readable summary with predictions. */
ICX_EXPORT const char* icx_exit_report_text(const icx_exit_report* report);

/* ---- sweeps ----------------------------------------------------------- */

/* Evaluates every dataset of a manifest (CSV: name,path,label_column).
 * Writes <name>.sweep.csv files, report.csv and run_config.txt to out_dir.
 * Returns ICX_ERR_PARTIAL when some datasets failed and others succeeded. */
ICX_EXPORT icx_status icx_sweep(const icx_model* model, const char* manifest, const icx_config* config,
                                const double* taus, size_t n_taus, const char* out_dir, char** report);

#ifdef __cplusplus
}
#endif

#endif /* ICXEXIT_H */
