#ifndef ROUGHFOLIO_H
#define ROUGHFOLIO_H

#include <stddef.h>
#include <stdint.h>

// Result codes of every fallible call.
typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_UTF8 = 2,
  RF_STATUS_INVALID_INPUT = 3,
  RF_STATUS_CONFIG = 4,
  RF_STATUS_NUMERICAL = 5,
  RF_STATUS_INSUFFICIENT_REFINEMENT = 6,
  RF_STATUS_IO = 7,
  RF_STATUS_BUFFER_TOO_SMALL = 8,
  RF_STATUS_PANIC = 9,
} RfStatus;

// Flat `key = value` configuration.
typedef struct RfConfig RfConfig;

// Sampled path on a time grid, stored row-major (`len × dim`).
typedef struct RfPath RfPath;

// Result of a subcommand run.
typedef struct RfReport RfReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (when `cap` suffices) and
// returns the buffer size it needs, including the terminating NUL.
//
// # Safety
// `buf` must be null or valid for `cap` bytes of writes.
uintptr_t rf_last_error(char *buf, uintptr_t cap);

// Creates an empty configuration.
struct RfConfig *rf_config_new(void);

// Parses `key = value` text into a new configuration.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum RfStatus rf_config_parse(const char *text, struct RfConfig **out);

// Sets one key, replacing any previous value.
//
// # Safety
// `cfg` must come from this library; `key` and `value` must be NUL-terminated strings.
enum RfStatus rf_config_set(struct RfConfig *cfg, const char *key, const char *value);

// # Safety
// `cfg` must be null or come from this library and not be used afterwards.
void rf_config_free(struct RfConfig *cfg);

// Generates a driving path. `kind` is `brownian`, `zero`, `identity` or `sin`.
//
// # Safety
// `kind` must be a NUL-terminated string; `out` must be writable.
enum RfStatus rf_noise_generate(const char *kind,
                                uintptr_t dim,
                                double horizon,
                                uint32_t level,
                                uint64_t seed,
                                struct RfPath **out);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `path` must be null or come from this library.
uintptr_t rf_path_len(const struct RfPath *path);

// Dimension, or 0 for a null handle.
//
// # Safety
// `path` must be null or come from this library.
uintptr_t rf_path_dim(const struct RfPath *path);

// Copies the sample times (`len` values) into `times`.
//
// # Safety
// `path` must come from this library; `times` must be valid for `cap` writes.
enum RfStatus rf_path_times(const struct RfPath *path, double *times, uintptr_t cap);

// Copies the values row-major (`len × dim`) into `values`.
//
// # Safety
// `path` must come from this library; `values` must be valid for `cap` writes.
enum RfStatus rf_path_values(const struct RfPath *path, double *values, uintptr_t cap);

// `p`-variation of the path over all of its samples (subsampled above 4096).
//
// # Safety
// `path` must come from this library; `out` must be writable.
enum RfStatus rf_path_p_variation(const struct RfPath *path, double p, double *out);

// # Safety
// `path` must be null or come from this library and not be used afterwards.
void rf_path_free(struct RfPath *path);

// Runs a subcommand (`gen-noise`, `lift`, `solve`, `portfolio`, `stability`,
// `discretize`, `selftest`) writing its artifacts into `out_dir`.
//
// # Safety
// `command` and `out_dir` must be NUL-terminated strings, `cfg` null or from this
// library, and `out` writable.
enum RfStatus rf_run(const char *command,
                     const struct RfConfig *cfg,
                     const char *out_dir,
                     struct RfReport **out);

// 1 when every acceptance window of the report passed, 0 otherwise or for null.
//
// # Safety
// `report` must be null or come from this library.
int rf_report_passed(const struct RfReport *report);

// Copies the report JSON into `buf` (when `cap` suffices) and returns the size it
// needs including the NUL, or 0 for a null handle.
//
// # Safety
// `report` must be null or come from this library; `buf` null or valid for `cap` writes.
uintptr_t rf_report_json(const struct RfReport *report, char *buf, uintptr_t cap);

// # Safety
// `report` must be null or come from this library and not be used afterwards.
void rf_report_free(struct RfReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROUGHFOLIO_H */
