/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SMALLDIFF_H
#define SMALLDIFF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SdStatus {
  SD_STATUS_OK = 0,
  SD_STATUS_NULL_POINTER = 1,
  SD_STATUS_INVALID_ARGUMENT = 2,
  SD_STATUS_PARSE = 3,
  SD_STATUS_EVAL = 4,
  SD_STATUS_DEGENERATE = 5,
  SD_STATUS_NUMERIC = 6,
  SD_STATUS_DATA = 7,
  SD_STATUS_BUFFER_TOO_SMALL = 8,
  SD_STATUS_PANIC = 9,
} SdStatus;

/**
 * Parsed expression `f(x)`.
 */
typedef struct SdExpression SdExpression;

/**
 * Model `dX = S(X) dt + eps sigma(X) dW` on `[0, T]`.
 */
typedef struct SdModel SdModel;

/**
 * Discretely observed path.
 */
typedef struct SdPath SdPath;

/**
 * Outcome of [`sd_run_test`].
 */
typedef struct SdTestResult {
  double statistic;
  double p_value;
  double alpha;
  double critical_value;
  double sigma_hat;
  double sup_u;
  double eps;
  size_t n_obs;
  /**
   * 1 when the null is rejected, 0 otherwise.
   */
  int32_t reject;
} SdTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * successful call. Valid until the next call into this library.
 */
const char *sd_last_error(void);

/**
 * # Safety
 * `source` must be a NUL-terminated string and `out` writable.
 */
enum SdStatus sd_expression_parse(const char *source, struct SdExpression **out);

/**
 * # Safety
 * `expr` must come from [`sd_expression_parse`]; `out` must be writable.
 */
enum SdStatus sd_expression_eval(const struct SdExpression *expr, double x, double *out);

/**
 * # Safety
 * `expr` must come from [`sd_expression_parse`] or be NULL.
 */
void sd_expression_free(struct SdExpression *expr);

/**
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum SdStatus sd_model_new(const char *drift,
                           const char *sigma,
                           double x0,
                           double horizon,
                           double eps,
                           struct SdModel **out);

/**
 * Limit standard deviation `sqrt(int_0^T sigma(x_t)^2 dt)`.
 *
 * # Safety
 * `model` must come from [`sd_model_new`]; `out` must be writable.
 */
enum SdStatus sd_model_sigma_limit(const struct SdModel *model, double *out);

/**
 * # Safety
 * `model` must come from [`sd_model_new`] or be NULL.
 */
void sd_model_free(struct SdModel *model);

/**
 * Simulates a path on the uniform grid with mesh `eps^gamma`, using noise
 * stream `(seed, replication)`.
 *
 * # Safety
 * `model` must come from [`sd_model_new`]; `out` must be writable.
 */
enum SdStatus sd_path_simulate(const struct SdModel *model,
                               double gamma,
                               size_t substeps,
                               uint64_t seed,
                               uint64_t replication,
                               struct SdPath **out);

/**
 * Path from `n` observations. Times must start at 0 and increase strictly.
 *
 * # Safety
 * `times` and `values` must point to `n` readable doubles; `out` must be
 * writable.
 */
enum SdStatus sd_path_from_arrays(const double *times,
                                  const double *values,
                                  size_t n,
                                  double eps,
                                  struct SdPath **out);

/**
 * Number of observations, or 0 for NULL.
 *
 * # Safety
 * `path` must come from this library or be NULL.
 */
size_t sd_path_len(const struct SdPath *path);

/**
 * Copies times and values into caller buffers of capacity `cap`.
 *
 * # Safety
 * `path` must come from this library; `times` and `values` must point to
 * `cap` writable doubles.
 */
enum SdStatus sd_path_copy(const struct SdPath *path, double *times, double *values, size_t cap);

/**
 * # Safety
 * `path` must come from this library or be NULL.
 */
void sd_path_free(struct SdPath *path);

/**
 * Tests `H0: S = null_drift` on `path` at level `alpha`.
 *
 * # Safety
 * `path` must come from this library, `null_drift` must be NUL-terminated
 * and `out` writable.
 */
enum SdStatus sd_run_test(const struct SdPath *path,
                          const char *null_drift,
                          double alpha,
                          struct SdTestResult *out);

/**
 * `P(sup_{[0,1]} |B| <= x)`; NaN for NaN input.
 */
double sd_cdf(double x);

/**
 * # Safety
 * `out` must be writable.
 */
enum SdStatus sd_quantile(double p, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum SdStatus sd_p_value(double d, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMALLDIFF_H */
