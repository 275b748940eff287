#ifndef MVCCA_H
#define MVCCA_H

/* Generated by cbindgen from the mvcca-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum MvccaStatus {
  MVCCA_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MVCCA_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MVCCA_STATUS_INVALID_UTF8 = 2,
  /**
   * The config or another input was rejected.
   */
  MVCCA_STATUS_CONFIG_ERROR = 3,
  /**
   * The computation failed numerically.
   */
  MVCCA_STATUS_NUMERIC_ERROR = 4,
  /**
   * A bug: an internal invariant broke or a panic was caught.
   */
  MVCCA_STATUS_INTERNAL = 5,
} MvccaStatus;

/**
 * Opaque parsed experiment configuration.
 */
typedef struct MvccaConfig MvccaConfig;

/**
 * Opaque completed experiment run: per-trial table plus summary.
 */
typedef struct MvccaRecord MvccaRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *mvcca_version(void);

/**
 * Message describing the most recent failure on the calling thread, or
 * null when the last call on this thread succeeded. The pointer is
 * invalidated by the next mvcca_* call on the same thread.
 */
const char *mvcca_last_error_message(void);

/**
 * Parse and validate a JSON experiment config.
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` must be valid
 * for writes. On success `*out` owns a config that must be released with
 * [`mvcca_config_free`]; on failure `*out` is null.
 */
enum MvccaStatus mvcca_config_parse(const char *json, struct MvccaConfig **out);

/**
 * Release a config handle. Null is accepted and ignored.
 *
 * # Safety
 * `config` must have come from [`mvcca_config_parse`] and must not be
 * used again afterwards.
 */
void mvcca_config_free(struct MvccaConfig *config);

/**
 * Replace the config's seed, which changes its hash and its outputs.
 *
 * # Safety
 * `config` must be a live handle from [`mvcca_config_parse`].
 */
enum MvccaStatus mvcca_config_set_seed(struct MvccaConfig *config, uint64_t seed);

/**
 * Hex SHA-256 hash of the config's canonical JSON form.
 *
 * # Safety
 * `config` must be a live handle and `out` valid for writes. On success
 * `*out` owns a string to release with [`mvcca_string_free`].
 */
enum MvccaStatus mvcca_config_hash(const struct MvccaConfig *config, char **out);

/**
 * Run the experiment the config selects, blocking until it finishes.
 *
 * # Safety
 * `config` must be a live handle and `out` valid for writes. On success
 * `*out` owns a record to release with [`mvcca_record_free`]; on failure
 * `*out` is null.
 */
enum MvccaStatus mvcca_run(const struct MvccaConfig *config, struct MvccaRecord **out);

/**
 * Release a run record. Null is accepted and ignored.
 *
 * # Safety
 * `record` must have come from [`mvcca_run`] and must not be used again
 * afterwards.
 */
void mvcca_record_free(struct MvccaRecord *record);

/**
 * Number of data rows in the record's table; 0 for a null handle.
 *
 * # Safety
 * `record` must be null or a live handle from [`mvcca_run`].
 */
size_t mvcca_record_num_rows(const struct MvccaRecord *record);

/**
 * Number of columns in the record's table; 0 for a null handle.
 *
 * # Safety
 * `record` must be null or a live handle from [`mvcca_run`].
 */
size_t mvcca_record_num_columns(const struct MvccaRecord *record);

/**
 * Whether the run's acceptance condition held: 1 yes, 0 no, -1 when the
 * record carries no acceptance flag or the handle is null.
 *
 * # Safety
 * `record` must be null or a live handle from [`mvcca_run`].
 */
int32_t mvcca_record_assert_ok(const struct MvccaRecord *record);

/**
 * Render the record as CSV (header row plus one line per trial).
 *
 * # Safety
 * `record` must be a live handle and `out` valid for writes. On success
 * `*out` owns a string to release with [`mvcca_string_free`].
 */
enum MvccaStatus mvcca_record_csv(const struct MvccaRecord *record, char **out);

/**
 * Render the record as canonical JSON (sorted keys, newline-terminated).
 *
 * # Safety
 * `record` must be a live handle and `out` valid for writes. On success
 * `*out` owns a string to release with [`mvcca_string_free`].
 */
enum MvccaStatus mvcca_record_json(const struct MvccaRecord *record, char **out);

/**
 * Release a string produced by this library. Null is accepted and
 * ignored.
 *
 * # Safety
 * `s` must have come from an mvcca_* out-parameter and must not be used
 * again afterwards.
 */
void mvcca_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MVCCA_H */
