#ifndef MEMLEARN_H
#define MEMLEARN_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define ML_OK 0

#define ML_ERR_RUNTIME 1

#define ML_ERR_CONFIG 2

#define ML_ERR_TRACE 3

#define ML_ERR_ARGUMENT 4

/**
 * Opaque simulation configuration handle.
 */
typedef struct MlConfig MlConfig;

/**
 * Opaque metrics report handle.
 */
typedef struct MlReport MlReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Borrowed message for the last error on this thread.
 */
const char *ml_last_error(void);

/**
 * Load a TOML configuration file into a new handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
int32_t ml_config_load(const char *path, struct MlConfig **out);

/**
 * Parse a TOML configuration string into a new handle.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
int32_t ml_config_parse(const char *text, struct MlConfig **out);

/**
 * Override the seed of a configuration.
 *
 * # Safety
 * `cfg` must be a live handle from `ml_config_load`/`ml_config_parse`.
 */
int32_t ml_config_set_seed(struct MlConfig *cfg, uint64_t seed);

/**
 * Point the configuration at a trace file, replacing any synthetic source.
 *
 * # Safety
 * `cfg` must be a live handle; `path` a valid NUL-terminated string.
 */
int32_t ml_config_set_trace_path(struct MlConfig *cfg, const char *path);

/**
 * # Safety
 * `cfg` must be a handle returned by this library, not yet freed.
 */
void ml_config_free(struct MlConfig *cfg);

/**
 * Run one simulation; on success `out` receives an owned report handle.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
int32_t ml_simulate(const struct MlConfig *cfg, struct MlReport **out);

/**
 * Run the baseline/with-mechanisms pair; on success `out_json` receives the
 * paired report as an owned JSON string (free with `ml_string_free`).
 *
 * # Safety
 * `cfg` must be a live handle and `out_json` a valid pointer.
 */
int32_t ml_paired_run(const struct MlConfig *cfg, char **out_json);

/**
 * Canonical JSON of a report as an owned string (free with `ml_string_free`).
 *
 * # Safety
 * `report` must be a live handle and `out_json` a valid pointer.
 */
int32_t ml_report_json(const struct MlReport *report, char **out_json);

/**
 * # Safety
 * `report` must be a live handle.
 */
uint64_t ml_report_total_cycles(const struct MlReport *report);

/**
 * # Safety
 * `report` must be a live handle.
 */
uint64_t ml_report_llc_misses(const struct MlReport *report);

/**
 * # Safety
 * `report` must be a live handle.
 */
uint64_t ml_report_instructions(const struct MlReport *report);

/**
 * # Safety
 * `report` must be a handle returned by this library, not yet freed.
 */
void ml_report_free(struct MlReport *report);

/**
 * Generate a synthetic trace file from an inline key=val spec.
 *
 * # Safety
 * `spec` and `out_path` must be valid NUL-terminated strings.
 */
int32_t ml_gen_trace(const char *spec, const char *out_path);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must originate from a `*_json` out-parameter of this library.
 */
void ml_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMLEARN_H */
