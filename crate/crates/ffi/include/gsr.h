#ifndef GSR_H
#define GSR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GsrStatus {
  GSR_STATUS_OK = 0,
  GSR_STATUS_NULL_ARGUMENT = 1,
  GSR_STATUS_INVALID_UTF8 = 2,
  GSR_STATUS_INVALID_CONFIG = 3,
  GSR_STATUS_IO = 4,
  GSR_STATUS_FORMAT = 5,
  GSR_STATUS_COMPUTE = 6,
  GSR_STATUS_OUT_OF_RANGE = 7,
  GSR_STATUS_PANIC = 8,
} GsrStatus;

typedef struct GsrConfig GsrConfig;

/**
 * A loaded or generated dataset together with its stage cache.
 */
typedef struct GsrDataset GsrDataset;

typedef struct GsrReport GsrReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the
 * library; valid until the next call on this thread.
 */
const char *gsr_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void gsr_string_free(char *s);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GsrStatus gsr_config_new(struct GsrConfig **out);

/**
 * Parses a TOML configuration document.
 *
 * # Safety
 * `toml` must be a nul-terminated string and `out` a valid pointer.
 */
enum GsrStatus gsr_config_from_toml(const char *toml, struct GsrConfig **out);

/**
 * Applies one dotted `key=value` override, e.g. `pretrain.alpha=1.0`.
 * The configuration is unchanged on failure.
 *
 * # Safety
 * `config` must be a live handle and `assignment` a nul-terminated string.
 */
enum GsrStatus gsr_config_set(struct GsrConfig *config, const char *assignment);

/**
 * The configuration as TOML; release with `gsr_string_free`.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum GsrStatus gsr_config_to_toml(const struct GsrConfig *config, char **out);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void gsr_config_free(struct GsrConfig *config);

/**
 * Loads a dataset from a manifest path, directory or registered name.
 *
 * # Safety
 * `source` must be a nul-terminated string and `out` a valid pointer.
 */
enum GsrStatus gsr_dataset_load(const char *source, struct GsrDataset **out);

/**
 * Loads or generates the dataset named by the configuration's dataset section.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum GsrStatus gsr_dataset_from_config(const struct GsrConfig *config, struct GsrDataset **out);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t gsr_dataset_num_nodes(const struct GsrDataset *dataset);

/**
 * Undirected edge count, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t gsr_dataset_num_edges(const struct GsrDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void gsr_dataset_free(struct GsrDataset *dataset);

/**
 * Runs the configured pipeline over every seed. `variant` is null for the
 * configuration as given, or one of `gcn`, `full`, `no-inter`,
 * `random-init`, `orig-graph`, `feat-graph`, `struct-graph`.
 *
 * # Safety
 * Handles must be live, `variant` null or nul-terminated, `out` valid.
 */
enum GsrStatus gsr_run(const struct GsrDataset *dataset,
                       const struct GsrConfig *config,
                       const char *variant,
                       struct GsrReport **out);

/**
 * Mean test accuracy over seeds, or NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double gsr_report_mean_accuracy(const struct GsrReport *report);

/**
 * Population standard deviation of test accuracy, or NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double gsr_report_std_accuracy(const struct GsrReport *report);

/**
 * Number of seeds run, or 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t gsr_report_num_runs(const struct GsrReport *report);

/**
 * Test accuracy of run `index`.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum GsrStatus gsr_report_run_accuracy(const struct GsrReport *report, size_t index, double *out);

/**
 * Hex fingerprint identifying the report's results; release with
 * `gsr_string_free`.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum GsrStatus gsr_report_fingerprint(const struct GsrReport *report, char **out);

/**
 * The full report as JSON; release with `gsr_string_free`.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum GsrStatus gsr_report_to_json(const struct GsrReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void gsr_report_free(struct GsrReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GSR_H */
