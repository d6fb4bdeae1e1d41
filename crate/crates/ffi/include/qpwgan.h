#ifndef QPWGAN_H
#define QPWGAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum QpStatus {
  QP_STATUS_OK = 0,
  QP_STATUS_NULL_POINTER = 1,
  QP_STATUS_INVALID_ARGUMENT = 2,
  QP_STATUS_DIMENSION_MISMATCH = 3,
  QP_STATUS_INVALID_MEASURE = 4,
  QP_STATUS_INFEASIBLE = 5,
  QP_STATUS_NON_FINITE = 6,
  QP_STATUS_IO = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  QP_STATUS_INTERNAL = 8,
} QpStatus;

/**
 * Generator network loaded from a checkpoint.
 */
typedef struct QpGenerator QpGenerator;

/**
 * Weighted point cloud.
 */
typedef struct QpMeasure QpMeasure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *qp_last_error_message(void);

/**
 * Static name of a status code.
 */
const char *qp_status_name(enum QpStatus status);

/**
 * Library version string.
 */
const char *qp_version(void);

/**
 * Builds a measure from `n` points of dimension `dim`. `weights` may be
 * null for uniform weights; otherwise it holds `n` nonnegative values
 * summing to one.
 */
enum QpStatus qp_measure_new(const double *coords,
                             const double *weights,
                             size_t n,
                             size_t dim,
                             struct QpMeasure **out_measure);

/**
 * Releases a measure. Null is ignored.
 */
void qp_measure_free(struct QpMeasure *m);

/**
 * Number of atoms, or 0 for null.
 */
size_t qp_measure_len(const struct QpMeasure *m);

/**
 * Point dimension, or 0 for null.
 */
size_t qp_measure_dim(const struct QpMeasure *m);

/**
 * Exact OT between `mu` and `nu` under cost `d_q^p / p`. `plan` (size
 * `len(mu) * len(nu)`), `phi` (size `len(mu)`) and `psi` (size `len(nu)`)
 * are optional outputs and may be null.
 */
enum QpStatus qp_ot_exact(const struct QpMeasure *mu,
                          const struct QpMeasure *nu,
                          double q,
                          double p,
                          double *out_value,
                          double *plan,
                          double *phi,
                          double *psi);

/**
 * `W_{q,p}`, the p-th root of the exact OT value.
 */
enum QpStatus qp_wasserstein(const struct QpMeasure *mu,
                             const struct QpMeasure *nu,
                             double q,
                             double p,
                             double *out_value);

/**
 * OT between two uniform 1-D samples of equal length via sorted matching.
 */
enum QpStatus qp_ot_1d_sorted(const double *xs,
                              const double *ys,
                              size_t n,
                              double q,
                              double p,
                              double *out_value);

/**
 * `min_k c(b_k, y) - phi_k` over the `n` search points `b`, with the first
 * minimizing index.
 */
enum QpStatus qp_c_transform(const double *phi,
                             const double *b,
                             size_t n,
                             size_t dim,
                             const double *y,
                             double q,
                             double p,
                             double *out_value,
                             size_t *out_index);

/**
 * Loads a generator checkpoint written by the `qpwgan` CLI.
 */
enum QpStatus qp_generator_load(const char *path, struct QpGenerator **out_generator);

void qp_generator_free(struct QpGenerator *g);

/**
 * Noise dimension, or 0 for null.
 */
size_t qp_generator_input_dim(const struct QpGenerator *g);

/**
 * Sample dimension, or 0 for null.
 */
size_t qp_generator_output_dim(const struct QpGenerator *g);

/**
 * Maps `n` noise vectors (`n * input_dim` doubles) to `n` samples written
 * to `out_samples` (`n * output_dim` doubles).
 */
enum QpStatus qp_generator_apply(const struct QpGenerator *g,
                                 const double *noise,
                                 size_t n,
                                 double *out_samples);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QPWGAN_H */
