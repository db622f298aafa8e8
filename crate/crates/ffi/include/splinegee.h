#ifndef SPLINEGEE_H
#define SPLINEGEE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgeeStatus {
  SGEE_STATUS_OK = 0,
  SGEE_STATUS_NULL_POINTER = 1,
  SGEE_STATUS_INVALID_ARGUMENT = 2,
  SGEE_STATUS_DOMAIN_ERROR = 3,
  SGEE_STATUS_NUMERICAL_FAILURE = 4,
  SGEE_STATUS_NOT_CONVERGED = 5,
  SGEE_STATUS_SELECTION_FAILED = 6,
  SGEE_STATUS_INFEASIBLE_CORRELATION = 7,
  SGEE_STATUS_TOO_MANY_FAILURES = 8,
  SGEE_STATUS_PANIC = 99,
} SgeeStatus;

/**
 * Opaque clustered dataset.
 */
typedef struct SgeeDataset SgeeDataset;

/**
 * Opaque fitted model.
 */
typedef struct SgeeFit SgeeFit;

/**
 * Fit configuration. `family`: 0 gaussian, 1 binary. `correlation`:
 * 0 independence, 1 exchangeable, 2 AR(1). `estimate_alpha`: nonzero to
 * estimate the working-correlation parameter, otherwise `alpha` is used.
 */
typedef struct SgeeFitOptions {
  int32_t family;
  int32_t correlation;
  int32_t estimate_alpha;
  double alpha;
  uint32_t degree;
  double level;
} SgeeFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *sgee_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library that has not
 * been freed.
 */
void sgee_string_free(char *s);

/**
 * Builds a dataset from row-major arrays with one row per observation.
 * Rows sharing a cluster id form a cluster, in row order; clusters are
 * ordered by id. Additive covariates must lie in [0, 1].
 *
 * # Safety
 * `cluster_ids` and `y` must point to `n_obs` values, `x` to
 * `n_obs * d1` and `z` to `n_obs * d2` values (either may be null when its
 * width is zero). `out` must be a valid pointer.
 */
enum SgeeStatus sgee_dataset_new(size_t n_obs,
                                 const int64_t *cluster_ids,
                                 const double *y,
                                 const double *x,
                                 size_t d1,
                                 const double *z,
                                 size_t d2,
                                 struct SgeeDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from `sgee_dataset_new` not yet freed.
 */
void sgee_dataset_free(struct SgeeDataset *ds);

/**
 * Number of clusters, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t sgee_dataset_n_clusters(const struct SgeeDataset *ds);

struct SgeeFitOptions sgee_fit_options_default(void);

/**
 * Fits the model; `options` may be null for the defaults.
 *
 * # Safety
 * `ds` must be a live dataset handle, `options` null or valid, and `out`
 * a valid pointer.
 */
enum SgeeStatus sgee_fit(const struct SgeeDataset *ds,
                         const struct SgeeFitOptions *options,
                         struct SgeeFit **out);

/**
 * # Safety
 * `fit` must be null or a handle from `sgee_fit` not yet freed.
 */
void sgee_fit_free(struct SgeeFit *fit);

/**
 * Number of linear coefficients, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t sgee_fit_n_beta(const struct SgeeFit *fit);

/**
 * Number of additive components, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t sgee_fit_n_components(const struct SgeeFit *fit);

/**
 * Copies the linear coefficient estimates into `out` (capacity `len`).
 *
 * # Safety
 * `fit` must be a live fit handle and `out` must hold `len` doubles.
 */
enum SgeeStatus sgee_fit_beta(const struct SgeeFit *fit, double *out, size_t len);

/**
 * Copies the sandwich standard errors of the linear coefficients.
 *
 * # Safety
 * `fit` must be a live fit handle and `out` must hold `len` doubles.
 */
enum SgeeStatus sgee_fit_beta_se(const struct SgeeFit *fit, double *out, size_t len);

/**
 * Estimate of component `component` at `z` in [0, 1] with its pointwise
 * interval at confidence `level`.
 *
 * # Safety
 * `fit` must be a live fit handle; the out pointers must be valid.
 */
enum SgeeStatus sgee_fit_component_eval(const struct SgeeFit *fit,
                                        size_t component,
                                        double z,
                                        double level,
                                        double *estimate,
                                        double *lower,
                                        double *upper);

/**
 * JSON fit report; release with `sgee_string_free`.
 *
 * # Safety
 * `fit` must be a live fit handle and `out` a valid pointer.
 */
enum SgeeStatus sgee_fit_report_json(const struct SgeeFit *fit, char **out);

/**
 * Runs a Monte Carlo study on built-in design `example` (1 or 2) and
 * returns the JSON report. `m = 0` selects the design's default cluster
 * size; `threads = 0` uses all cores.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SgeeStatus sgee_simulate_json(uint32_t example,
                                   size_t n,
                                   size_t m,
                                   size_t nsim,
                                   int32_t correlation,
                                   uint64_t seed,
                                   size_t threads,
                                   char **out);

/**
 * Library version as a static nul-terminated string.
 */
const char *sgee_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLINEGEE_H */
