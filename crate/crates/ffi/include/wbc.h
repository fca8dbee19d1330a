#ifndef WBC_H
#define WBC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WbcStatus {
  WBC_STATUS_OK = 0,
  WBC_STATUS_NULL_POINTER = 1,
  WBC_STATUS_INVALID_UTF8 = 2,
  WBC_STATUS_INVALID_ARGUMENT = 3,
  WBC_STATUS_CONFIG = 4,
  WBC_STATUS_SCHEDULE = 5,
  WBC_STATUS_NO_CONVERGENCE = 6,
  WBC_STATUS_IO = 7,
  WBC_STATUS_BUFFER_TOO_SMALL = 8,
  WBC_STATUS_PANIC = 9,
} WbcStatus;

/**
 * A running scenario.
 */
typedef struct WbcSimulation WbcSimulation;

/**
 * Per-round summary of a simulation's current state.
 */
typedef struct WbcMetrics {
  size_t t;
  double v2_max;
  double diameter;
  double max_jensen_residual;
} WbcMetrics;

typedef struct WbcRunSummary {
  bool converged;
  size_t rounds;
  double final_diameter;
} WbcRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *wbc_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on this thread.
 */
const char *wbc_last_error(void);

/**
 * Creates a simulation from scenario JSON. Relative paths resolve against
 * the working directory.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum WbcStatus wbc_simulation_from_json(const char *json, struct WbcSimulation **out);

/**
 * Creates a simulation from a scenario file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum WbcStatus wbc_simulation_from_file(const char *path, struct WbcSimulation **out);

/**
 * Releases a simulation. NULL is ignored.
 *
 * # Safety
 * `sim` must come from a `wbc_simulation_from_*` call and not be used again.
 */
void wbc_simulation_free(struct WbcSimulation *sim);

/**
 * Number of agents, or 0 for NULL.
 *
 * # Safety
 * `sim` must be NULL or a live handle.
 */
size_t wbc_simulation_agent_count(const struct WbcSimulation *sim);

/**
 * Metrics of the current state.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum WbcStatus wbc_simulation_metrics(struct WbcSimulation *sim, struct WbcMetrics *out);

/**
 * Copies the per-agent second moments into `buf` (`len` ≥ agent count).
 *
 * # Safety
 * `sim` must be a live handle; `buf` must hold `len` doubles.
 */
enum WbcStatus wbc_simulation_v2(struct WbcSimulation *sim, double *buf, size_t len);

/**
 * Advances one synchronous round.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum WbcStatus wbc_simulation_step(struct WbcSimulation *sim);

/**
 * Runs from the current state until the scenario's stop criteria hold
 * (`max_rounds` counts from the current round).
 *
 * # Safety
 * `sim` must be a live handle; `out` must be NULL or writable.
 */
enum WbcStatus wbc_simulation_run(struct WbcSimulation *sim, struct WbcRunSummary *out);

/**
 * Current state as JSON; free with `wbc_string_free`. NULL on failure.
 *
 * # Safety
 * `sim` must be a live handle.
 */
char *wbc_simulation_state_json(struct WbcSimulation *sim);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used again.
 */
void wbc_string_free(char *s);

/**
 * W₂ between two Gaussians on R^d. Covariances are row-major d×d.
 *
 * # Safety
 * Means must hold `d` doubles, covariances `d*d`; `out` must be writable.
 */
enum WbcStatus wbc_w2_gaussian(size_t d,
                               const double *mean_a,
                               const double *cov_a,
                               const double *mean_b,
                               const double *cov_b,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WBC_H */
