/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ORBITFORGE_H
#define ORBITFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OfStatus {
  OF_STATUS_OK = 0,
  OF_STATUS_ANALYSIS_FAILED = 1,
  OF_STATUS_CONFIG_ERROR = 2,
  OF_STATUS_NULL_POINTER = 3,
  OF_STATUS_INVALID_ARGUMENT = 4,
  OF_STATUS_NUMERICAL_ERROR = 5,
  OF_STATUS_PANIC = 6,
} OfStatus;

/**
 * A loaded scenario config.
 */
typedef struct OfScenario OfScenario;

/**
 * Simulation output.
 */
typedef struct OfTrajectory OfTrajectory;

/**
 * Induction motor parameters.
 */
typedef struct OfImParams {
  double r;
  double beta_star;
  double omega_star;
  double k;
} OfImParams;

/**
 * Pendulum parameters. `global == 0` selects the local design with gain
 * `gamma1`; otherwise the piecewise design with `gamma1` inside and `gamma2`
 * outside.
 */
typedef struct OfPendulumParams {
  int32_t global;
  double gamma1;
  double gamma2;
  double theta_star;
} OfPendulumParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next orbitforge call on this thread.
 */
const char *of_last_error(void);

/**
 * Runs the verification suite of a built-in design. `violations` receives
 * the total violation count. Returns `OF_STATUS_ANALYSIS_FAILED` when any
 * check fails.
 *
 * # Safety
 * `design` must be a NUL-terminated string and `violations` writable.
 */
enum OfStatus of_verify(const char *design, size_t grid, uint64_t seed, size_t *violations);

/**
 * Fixed-frame motor control `u = u(x)`; `x` has 3 entries, `u` 2.
 *
 * # Safety
 * `params`, `x` and `u` must point to valid memory of the stated sizes.
 */
enum OfStatus of_im_control(const struct OfImParams *params, const double *x, double *u);

/**
 * Pendulum control `u = u(θ, ω)`.
 *
 * # Safety
 * `params` and `x` (2 entries) must be readable, `u` writable.
 */
enum OfStatus of_pendulum_control(const struct OfPendulumParams *params,
                                  const double *x,
                                  double *u);

/**
 * Infinity norm of the difference between the fixed-frame law and the
 * rotated field-oriented law at state `x` (3 entries) and frame angle `theta`.
 *
 * # Safety
 * `params` and `x` must be readable, `residual` writable.
 */
enum OfStatus of_foc_equivalence_residual(const struct OfImParams *params,
                                          const double *x,
                                          double theta,
                                          double *residual);

/**
 * Loads and runs a config file, writing outputs to `out_dir` (or the
 * config's own output directory when null). Status mirrors the CLI exit code.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_dir` may be null.
 */
enum OfStatus of_run_config(const char *path, const char *out_dir);

/**
 * Loads a scenario config into `*scenario`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `scenario` writable.
 */
enum OfStatus of_scenario_load(const char *path, struct OfScenario **scenario);

/**
 * # Safety
 * `scenario` must come from [`of_scenario_load`] or be null.
 */
void of_scenario_free(struct OfScenario *scenario);

/**
 * Simulates a loaded scenario into `*trajectory`.
 *
 * # Safety
 * `scenario` must be a live handle and `trajectory` writable.
 */
enum OfStatus of_scenario_simulate(const struct OfScenario *scenario,
                                   struct OfTrajectory **trajectory);

/**
 * # Safety
 * `trajectory` must come from [`of_scenario_simulate`] or be null.
 */
void of_trajectory_free(struct OfTrajectory *trajectory);

/**
 * Number of samples and state dimension.
 *
 * # Safety
 * `trajectory` must be a live handle; `len` and `dim` writable.
 */
enum OfStatus of_trajectory_shape(const struct OfTrajectory *trajectory, size_t *len, size_t *dim);

/**
 * Copies sample `index`: time into `*t`, state into `x` (capacity `dim`),
 * and the distance to the orbit into `*dist`.
 *
 * # Safety
 * `trajectory` must be a live handle; `x` must hold `dim` doubles.
 */
enum OfStatus of_trajectory_sample(const struct OfTrajectory *trajectory,
                                   size_t index,
                                   double *t,
                                   double *x,
                                   size_t dim,
                                   double *dist);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORBITFORGE_H */
