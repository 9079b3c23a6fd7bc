#ifndef SWELLCP_H
#define SWELLCP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SwellcpStatus {
  SWELLCP_STATUS_OK = 0,
  SWELLCP_STATUS_NULL_POINTER = 1,
  SWELLCP_STATUS_INVALID_ARGUMENT = 2,
  SWELLCP_STATUS_IO = 3,
  SWELLCP_STATUS_SCHEMA = 4,
  SWELLCP_STATUS_CONFIG = 5,
  SWELLCP_STATUS_STATE = 6,
  SWELLCP_STATUS_DOMAIN = 7,
  SWELLCP_STATUS_PANIC = 8,
} SwellcpStatus;

/**
 * Opaque model handle.
 */
typedef struct SwellcpModel SwellcpModel;

/**
 * Physical-scale interval plus the model-space values it came from.
 */
typedef struct SwellcpInterval {
  double point;
  double lower;
  double upper;
  /**
   * Model-space (log) prediction and bounds. Equal to the physical values
   * for raw-space models.
   */
  double log_point;
  double log_lower;
  double log_upper;
  double alpha;
  /**
   * Nonzero when the conformal rank exceeds the calibration size.
   */
  int32_t unbounded;
} SwellcpInterval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *swellcp_version(void);

/**
 * Message for the last failing call on this thread, or null.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *swellcp_last_error(void);

/**
 * Number of encoded features a model row must have.
 */
size_t swellcp_n_features(void);

/**
 * Load a model file. On success `*out` owns a handle to release with
 * [`swellcp_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SwellcpStatus swellcp_model_load(const char *path, struct SwellcpModel **out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void swellcp_model_free(struct SwellcpModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SwellcpStatus swellcp_model_n_trees(const struct SwellcpModel *model, size_t *out);

/**
 * Conformal threshold and miscoverage level of a calibrated model.
 * `*q_out` is +infinity when the interval is unbounded.
 *
 * # Safety
 * `model` must be a live handle; `q_out` and `alpha_out` writable.
 */
enum SwellcpStatus swellcp_model_calibration(const struct SwellcpModel *model,
                                             double *q_out,
                                             double *alpha_out);

/**
 * Encode 17 continuous inputs plus an irradiation class index (0 Ni ion,
 * 1 Fe ion, 2 neutron, 3 proton, 4 electron) into the 22-column model row.
 *
 * # Safety
 * `continuous` must hold 17 values and `out` room for 22.
 */
enum SwellcpStatus swellcp_encode_features(const double *continuous,
                                           uint32_t irradiation_class,
                                           double *out);

/**
 * Ensemble mean and population standard deviation across trees, in the
 * model's target space.
 *
 * # Safety
 * `x` must hold `n_features` values; `mean_out` and `std_out` writable.
 */
enum SwellcpStatus swellcp_predict_mean_std(const struct SwellcpModel *model,
                                            const double *x,
                                            size_t n_features,
                                            double *mean_out,
                                            double *std_out);

/**
 * Conformal prediction interval for one encoded row.
 *
 * # Safety
 * `x` must hold `n_features` values and `out` be writable.
 */
enum SwellcpStatus swellcp_predict_interval(const struct SwellcpModel *model,
                                            const double *x,
                                            size_t n_features,
                                            struct SwellcpInterval *out);

/**
 * Order-statistic rank `ceil((n + 1)(1 - alpha))`; may exceed `n_cal`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SwellcpStatus swellcp_conformal_rank(size_t n_cal, double alpha, size_t *out);

/**
 * Conformal threshold over `n` nonconformity scores; +infinity when the
 * rank exceeds `n`.
 *
 * # Safety
 * `scores` must hold `n` values and `q_out` be writable.
 */
enum SwellcpStatus swellcp_conformal_quantile(const double *scores,
                                              size_t n,
                                              double alpha,
                                              double *q_out);

/**
 * `ln(y + offset)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SwellcpStatus swellcp_transform_forward(double offset, double y, double *out);

/**
 * `exp(y_log) - offset`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SwellcpStatus swellcp_transform_inverse(double offset, double y_log, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWELLCP_H */
