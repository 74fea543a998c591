#ifndef SIGNFLOW_H
#define SIGNFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_UTF8 = 2,
  SF_STATUS_CONFIG = 3,
  SF_STATUS_NUMERICAL = 4,
  SF_STATUS_STEERING_FAILED = 5,
  SF_STATUS_BUFFER_TOO_SMALL = 6,
  SF_STATUS_PANIC = 7,
} SfStatus;

/**
 * Parsed and validated scenario.
 */
typedef struct SfScenario SfScenario;

/**
 * A discrete state on the scenario grid.
 */
typedef struct SfState SfState;

/**
 * Outcome of a steering run.
 */
typedef struct SfSteering SfSteering;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *sf_last_error(void);

/**
 * Parses a scenario from a NUL-terminated JSON document.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_scenario_from_json(const char *json, struct SfScenario **out);

/**
 * # Safety
 * `s` must come from [`sf_scenario_from_json`] and not be freed twice.
 */
void sf_scenario_free(struct SfScenario *s);

/**
 * Writes the first `len` eigenvalues λ_p ≥ 0 of the scenario operator.
 *
 * # Safety
 * `s` must be a live scenario and `out` must hold `len` doubles.
 */
enum SfStatus sf_eigenvalues(const struct SfScenario *s, double *out, size_t len);

/**
 * Evolves the scenario's initial profile to `t_final` under its constant α.
 *
 * # Safety
 * `s` must be a live scenario and `out` a valid pointer.
 */
enum SfStatus sf_evolve(const struct SfScenario *s, struct SfState **out);

/**
 * # Safety
 * `st` must be a live state or null.
 */
size_t sf_state_len(const struct SfState *st);

/**
 * # Safety
 * `st` must be a live state or null.
 */
double sf_state_time(const struct SfState *st);

/**
 * Copies the cell values into `buf`, which must hold at least
 * [`sf_state_len`] doubles.
 *
 * # Safety
 * `st` must be a live state and `buf` must hold `len` doubles.
 */
enum SfStatus sf_state_values(const struct SfState *st, double *buf, size_t len);

/**
 * # Safety
 * `st` must come from this library and not be freed twice.
 */
void sf_state_free(struct SfState *st);

/**
 * Counts the sign changes of cell values on a uniform grid of (-1, 1).
 *
 * # Safety
 * `values` must hold `n` doubles and `out` must be valid.
 */
enum SfStatus sf_count_sign_changes(const double *values, size_t n, size_t *out);

/**
 * Runs the full steering pipeline. A run that completes but misses its
 * targets still returns a handle; check [`sf_steering_success`].
 *
 * # Safety
 * `s` must be a live scenario and `out` a valid pointer.
 */
enum SfStatus sf_steer(const struct SfScenario *s, struct SfSteering **out);

/**
 * # Safety
 * `h` must be a live steering handle or null.
 */
bool sf_steering_success(const struct SfSteering *h);

/**
 * # Safety
 * `h` must be a live steering handle or null.
 */
double sf_steering_final_error(const struct SfSteering *h);

/**
 * # Safety
 * `h` must be a live steering handle or null.
 */
size_t sf_steering_intervals(const struct SfSteering *h);

/**
 * Run summary as a JSON string; release it with [`sf_string_free`].
 *
 * # Safety
 * `h` must be a live steering handle or null.
 */
char *sf_steering_summary_json(const struct SfSteering *h);

/**
 * # Safety
 * `h` must come from [`sf_steer`] and not be freed twice.
 */
void sf_steering_free(struct SfSteering *h);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void sf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIGNFLOW_H */
