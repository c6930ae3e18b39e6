/* C interface to the chemokin chemotaxis toolkit. */

#ifndef CHEMOKIN_H
#define CHEMOKIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum ChemoStatus {
  ChemoStatusOk = 0,
  ChemoStatusNullPointer = 1,
  ChemoStatusInvalidArgument = 2,
  ChemoStatusSingular = 3,
  ChemoStatusNumerical = 4,
  ChemoStatusTimeout = 5,
  ChemoStatusIo = 6,
  ChemoStatusPanic = 7,
} ChemoStatus;

/**
 * Opaque stationary activity profile; see `chemo_closure_*`.
 */
typedef struct ChemoClosure ChemoClosure;

/**
 * Opaque agent ensemble; see `chemo_ensemble_*`.
 */
typedef struct ChemoEnsemble ChemoEnsemble;

/**
 * Physical parameters as a plain value struct (all fields `double`); get a
 * validated baseline from [`chemo_params_default`] and override fields.
 */
typedef struct ChemoParams {
  /**
   * Run speed (µm/s).
   */
  double v0;
  /**
   * Adaptation rate (1/s).
   */
  double k_r;
  /**
   * Activity set point.
   */
  double a0;
  /**
   * Methylation-to-energy slope.
   */
  double alpha0;
  /**
   * Baseline tumbling rate (1/s).
   */
  double z0;
  /**
   * Tumbling time scale (s).
   */
  double tau0;
  /**
   * Hill exponent of the tumbling rate.
   */
  double h;
  /**
   * Lower receptor dissociation constant (µM).
   */
  double k_i;
  /**
   * Upper receptor dissociation constant (µM).
   */
  double k_a;
  /**
   * Signal amplitude (µM).
   */
  double s0;
  /**
   * Receptor cooperativity.
   */
  double n;
  /**
   * Reference methylation level (observables do not depend on it).
   */
  double m0;
} ChemoParams;

/**
 * Steady-state drift statistics (filled even on timeout, as partial data).
 */
typedef struct ChemoSteadyStats {
  /**
   * Mean drift velocity (µm/s; positive is up-gradient).
   */
  double drift_mean;
  /**
   * Batch-means standard error of the mean.
   */
  double drift_stderr;
  /**
   * Simulated seconds elapsed.
   */
  double elapsed;
  /**
   * Completed averaging windows.
   */
  uint64_t windows;
  /**
   * 1 if the convergence test passed, 0 on timeout.
   */
  int32_t converged;
} ChemoSteadyStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *chemo_version(void);

/**
 * Message of the last failure on this thread (empty until one occurs).
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *chemo_last_error(void);

/**
 * Fills `out` with the default parameter set.
 *
 * # Safety
 * `out` must point to writable memory for one `ChemoParams`.
 */
enum ChemoStatus chemo_params_default(struct ChemoParams *out);

/**
 * Computes the stationary activity profile for spatial log-gradient
 * `g_spatial` (1/µm) and stores a new handle in `out`.
 *
 * # Safety
 * `params` and `out` must be valid pointers. On success the caller owns the
 * handle and must release it with [`chemo_closure_free`].
 */
enum ChemoStatus chemo_closure_compute(const struct ChemoParams *params,
                                       double g_spatial,
                                       struct ChemoClosure **out);

/**
 * Releases a closure handle; a null handle is a no-op.
 *
 * # Safety
 * `handle` must come from [`chemo_closure_compute`] and not be used after.
 */
void chemo_closure_free(struct ChemoClosure *handle);

/**
 * Gradient number g; NaN on a null handle.
 *
 * # Safety
 * `handle` must be a live closure handle or null.
 */
double chemo_closure_g(const struct ChemoClosure *handle);

/**
 * Population drift speed κ (µm/s); NaN on a null handle.
 *
 * # Safety
 * `handle` must be a live closure handle or null.
 */
double chemo_closure_kappa(const struct ChemoClosure *handle);

/**
 * Fraction of up-gradient movers; NaN on a null handle.
 *
 * # Safety
 * `handle` must be a live closure handle or null.
 */
double chemo_closure_frac_plus(const struct ChemoClosure *handle);

/**
 * Fraction of down-gradient movers; NaN on a null handle.
 *
 * # Safety
 * `handle` must be a live closure handle or null.
 */
double chemo_closure_frac_minus(const struct ChemoClosure *handle);

/**
 * Power-law exponent of the total density at the lower support edge;
 * NaN on a null handle.
 *
 * # Safety
 * `handle` must be a live closure handle or null.
 */
double chemo_closure_theta_left(const struct ChemoClosure *handle);

/**
 * Power-law exponent of the total density at the upper support edge;
 * NaN on a null handle.
 *
 * # Safety
 * `handle` must be a live closure handle or null.
 */
double chemo_closure_theta_right(const struct ChemoClosure *handle);

/**
 * Stores the support `[lo, hi]` of the stationary distribution.
 *
 * # Safety
 * All pointers must be valid; `lo` and `hi` must be writable.
 */
enum ChemoStatus chemo_closure_support(const struct ChemoClosure *handle, double *lo, double *hi);

/**
 * Evaluates the per-direction stationary densities at activity `a`
 * (must lie inside the open support).
 *
 * # Safety
 * All pointers must be valid; the outputs must be writable.
 */
enum ChemoStatus chemo_closure_density(const struct ChemoClosure *handle,
                                       double a,
                                       double *out_plus,
                                       double *out_minus);

/**
 * Integrates the per-direction densities over `n_edges - 1` bins; the two
 * output arrays receive masses that jointly sum to 1 when the edges span
 * the whole support.
 *
 * # Safety
 * `edges` must hold `n_edges` doubles; each output array must have room
 * for `n_edges - 1` doubles.
 */
enum ChemoStatus chemo_closure_bin_masses(const struct ChemoClosure *handle,
                                          const double *edges,
                                          size_t n_edges,
                                          double *out_plus,
                                          double *out_minus);

/**
 * Creates an ensemble of `n_agents` swimmers in an exponential gradient
 * `g_spatial` (1/µm), on the signal's natural domain (or a 400 µm box when
 * `g_spatial` is 0). Deterministic for a fixed seed.
 *
 * # Safety
 * `params` and `out` must be valid pointers. On success the caller owns the
 * handle and must release it with [`chemo_ensemble_free`].
 */
enum ChemoStatus chemo_ensemble_new(const struct ChemoParams *params,
                                    double g_spatial,
                                    size_t n_agents,
                                    uint64_t seed,
                                    struct ChemoEnsemble **out);

/**
 * Releases an ensemble handle; a null handle is a no-op.
 *
 * # Safety
 * `handle` must come from an ensemble constructor and not be used after.
 */
void chemo_ensemble_free(struct ChemoEnsemble *handle);

/**
 * Number of agents; 0 on a null handle.
 *
 * # Safety
 * `handle` must be a live ensemble handle or null.
 */
size_t chemo_ensemble_n_agents(const struct ChemoEnsemble *handle);

/**
 * Advances the ensemble by `steps` steps of length `dt` seconds.
 *
 * # Safety
 * `handle` must be a live, exclusively held ensemble handle.
 */
enum ChemoStatus chemo_ensemble_step(struct ChemoEnsemble *handle, double dt, uint64_t steps);

/**
 * Instantaneous drift estimate `v0·(n⁺ − n⁻)/n` (µm/s); NaN on null.
 *
 * # Safety
 * `handle` must be a live ensemble handle or null.
 */
double chemo_ensemble_drift(const struct ChemoEnsemble *handle);

/**
 * Fraction of agents with activity in `[lo, hi]`; NaN on a null handle.
 *
 * # Safety
 * `handle` must be a live ensemble handle or null.
 */
double chemo_ensemble_fraction_in(const struct ChemoEnsemble *handle, double lo, double hi);

/**
 * Runs to a steady drift (windows of `window` samples, tolerance `tol` in
 * units of `v0`, at most `max_time` simulated seconds) and fills `out`.
 * On `CHEMO_STATUS_TIMEOUT` the statistics are still filled (partial data,
 * `converged = 0`) and the ensemble state remains usable.
 *
 * # Safety
 * `handle` must be a live, exclusively held ensemble handle; `out` must be
 * writable.
 */
enum ChemoStatus chemo_ensemble_run_steady(struct ChemoEnsemble *handle,
                                           double dt,
                                           size_t window,
                                           double tol,
                                           double max_time,
                                           struct ChemoSteadyStats *out);

/**
 * Per-direction activity histograms over `n_edges - 1` bins, as densities
 * per unit activity, jointly normalised across both directions.
 *
 * # Safety
 * `edges` must hold `n_edges` doubles (strictly increasing); each output
 * array must have room for `n_edges - 1` doubles.
 */
enum ChemoStatus chemo_ensemble_histogram(const struct ChemoEnsemble *handle,
                                          const double *edges,
                                          size_t n_edges,
                                          double *out_plus,
                                          double *out_minus);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHEMOKIN_H */
