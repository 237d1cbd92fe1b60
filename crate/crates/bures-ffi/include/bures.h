#ifndef BURES_H
#define BURES_H

/* Generated by cbindgen from the bures-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum BuresStatus {
  BURES_STATUS_OK = 0,
  BURES_STATUS_NULL_POINTER = 1,
  BURES_STATUS_INVALID_ARGUMENT = 2,
  BURES_STATUS_NOT_POSITIVE_SEMIDEFINITE = 3,
  BURES_STATUS_SINGULAR_MATRIX = 4,
  BURES_STATUS_DIMENSION_MISMATCH = 5,
  BURES_STATUS_EIG_NOT_CONVERGED = 6,
  BURES_STATUS_NOT_ADMISSIBLE = 7,
  BURES_STATUS_NOT_REGULAR = 8,
  BURES_STATUS_SCHEDULE_ERROR = 9,
  BURES_STATUS_PARSE_ERROR = 10,
  BURES_STATUS_IO_ERROR = 11,
  BURES_STATUS_PANIC = 12,
} BuresStatus;

/**
 * Opaque weighted-dataset handle.
 */
typedef struct BuresDataset BuresDataset;

/**
 * Opaque Gaussian measure handle.
 */
typedef struct BuresMeasure BuresMeasure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. Never null;
 * empty before the first failure. Valid until the next failing call on the
 * same thread.
 */
const char *bures_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bures_version(void);

/**
 * Creates a Gaussian measure from a mean (nullable: zeros) and a row-major
 * `dim x dim` covariance. The covariance must be symmetric positive
 * semidefinite.
 */
enum BuresStatus bures_measure_new(size_t dim,
                                   const double *mean,
                                   const double *cov_row_major,
                                   struct BuresMeasure **out);

void bures_measure_free(struct BuresMeasure *measure);

enum BuresStatus bures_measure_dim(const struct BuresMeasure *measure, size_t *out);

/**
 * Copies the mean into a caller buffer of length `dim`.
 */
enum BuresStatus bures_measure_mean(const struct BuresMeasure *measure, double *buf);

/**
 * Copies the covariance, row-major, into a caller buffer of length
 * `dim * dim`.
 */
enum BuresStatus bures_measure_cov(const struct BuresMeasure *measure, double *buf);

/**
 * Builds a dataset from parallel arrays: `n_atoms` weights (must be
 * positive and sum to 1 within 1e-9; renormalized exactly), optional means
 * (`n_atoms * dim`, nullable for centered atoms), and covariances
 * (`n_atoms * dim * dim`, row-major, atom-major).
 */
enum BuresStatus bures_dataset_new(size_t dim,
                                   size_t n_atoms,
                                   const double *weights,
                                   const double *means,
                                   const double *covs_row_major,
                                   struct BuresDataset **out);

/**
 * Parses a dataset from JSON text (same schema as the CLI dataset files).
 */
enum BuresStatus bures_dataset_from_json(const char *text, struct BuresDataset **out);

/**
 * Serializes a dataset to JSON. Free the returned string with
 * `bures_string_free`.
 */
enum BuresStatus bures_dataset_to_json(const struct BuresDataset *dataset, char **out);

void bures_string_free(char *s);

void bures_dataset_free(struct BuresDataset *dataset);

enum BuresStatus bures_dataset_len(const struct BuresDataset *dataset, size_t *out);

enum BuresStatus bures_dataset_dim(const struct BuresDataset *dataset, size_t *out);

/**
 * Clones atom `index` out of the dataset as a standalone measure handle.
 */
enum BuresStatus bures_dataset_atom(const struct BuresDataset *dataset,
                                    size_t index,
                                    struct BuresMeasure **out);

/**
 * Largest `zeta` for which every atom satisfies `det cov >= zeta`.
 */
enum BuresStatus bures_dataset_zeta(const struct BuresDataset *dataset, double *out);

/**
 * Squared 2-Wasserstein distance between two measures.
 */
enum BuresStatus bures_w2_distance_sq(const struct BuresMeasure *a,
                                      const struct BuresMeasure *b,
                                      double *out);

/**
 * Barycenter objective `G(b) = 1/2 sum_i w_i W2^2(b, mu_i)`.
 */
enum BuresStatus bures_objective(const struct BuresDataset *dataset,
                                 const struct BuresMeasure *point,
                                 double *out);

/**
 * Squared norm of the barycenter-functional gradient at `point`.
 */
enum BuresStatus bures_grad_norm_sq(const struct BuresDataset *dataset,
                                    const struct BuresMeasure *point,
                                    double *out);

/**
 * Residual of the barycenter fixed-point equation at `point`.
 */
enum BuresStatus bures_fixed_point_residual(const struct BuresDataset *dataset,
                                            const struct BuresMeasure *point,
                                            double *out);

/**
 * Unit-step gradient descent. `init` is nullable (defaults to the heaviest
 * atom). On success `*out` holds the final measure; `out_iterations` and
 * `out_converged` are optional.
 */
enum BuresStatus bures_gd(const struct BuresDataset *dataset,
                          const struct BuresMeasure *init,
                          size_t max_iters,
                          double tol,
                          struct BuresMeasure **out,
                          size_t *out_iterations,
                          int *out_converged);

/**
 * SGD sampling atoms with replacement for `iters` iterations, deterministic
 * given `seed`. `schedule_spec` uses the schedule mini-grammar
 * (`paper_pl:c=...`, `exp:c=...`, `const:...`, `file:...`).
 */
enum BuresStatus bures_sgd_with_replacement(const struct BuresDataset *dataset,
                                            const struct BuresMeasure *init,
                                            const char *schedule_spec,
                                            size_t iters,
                                            uint64_t seed,
                                            struct BuresMeasure **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BURES_H */
