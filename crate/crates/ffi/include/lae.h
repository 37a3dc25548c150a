#ifndef LAE_H
#define LAE_H

/* Generated by cbindgen from lae-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes shared by every fallible call.
 */
enum LaeStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  LaeStatus_Ok = 0,
  LaeStatus_NullPointer = 1,
  LaeStatus_Utf8 = 2,
  LaeStatus_InvalidArgument = 3,
  LaeStatus_Io = 4,
  LaeStatus_Numerical = 5,
  LaeStatus_Diverged = 6,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum LaeStatus LaeStatus;
#else
typedef int32_t LaeStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Dataset plus its oracle spectrum.
 */
typedef struct LaeDataset LaeDataset;

/**
 * Weights and metric trace produced by one training run.
 */
typedef struct LaeTrainResult LaeTrainResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread (empty when no error occurred).
 * The pointer stays valid until the next fallible call on this thread.
 */
const char *lae_last_error_message(void);

/**
 * Build a synthetic dataset with prescribed data singular values
 * (descending, `len = min(m, n)`) and keep the top-`k` oracle spectrum.
 *
 * # Safety
 * `singular_values` must point to `len` doubles; `out` must be valid.
 */
LaeStatus lae_dataset_synthetic(size_t m,
                                size_t n,
                                size_t k,
                                uint64_t seed,
                                const double *singular_values,
                                size_t len,
                                struct LaeDataset **out);

/**
 * Load a CSV dataset (one sample per column), center it, and decompose the
 * top-`k` spectrum.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
LaeStatus lae_dataset_from_csv(const char *path, size_t k, struct LaeDataset **out);

/**
 * Load an IDX image dataset, center it, and decompose the top-`k` spectrum.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
LaeStatus lae_dataset_from_idx(const char *path, size_t k, struct LaeDataset **out);

/**
 * # Safety
 * `handle` must come from a dataset constructor (or be null).
 */
void lae_dataset_free(struct LaeDataset *handle);

/**
 * Fetch `(features, samples, spectrum size)`.
 *
 * # Safety
 * All pointers must be valid.
 */
LaeStatus lae_dataset_dims(const struct LaeDataset *handle, size_t *m, size_t *n, size_t *k);

/**
 * Eigenvalue `σ²_index` (zero-based) of the oracle spectrum.
 *
 * # Safety
 * All pointers must be valid.
 */
LaeStatus lae_dataset_eigenvalue(const struct LaeDataset *handle, size_t index, double *out);

/**
 * Train on a dataset. `run_toml` holds the same keys as the `[run]` section
 * of an experiment config, e.g.
 * `k = 4\nscheme = "rag"\nalpha = 0.1\nepochs = 500\nseed = 0`.
 *
 * # Safety
 * `handle` and `out` must be valid; `run_toml` NUL-terminated.
 */
LaeStatus lae_train_toml(const struct LaeDataset *handle,
                         const char *run_toml,
                         struct LaeTrainResult **out);

/**
 * # Safety
 * `handle` must come from [`lae_train_toml`] (or be null).
 */
void lae_result_free(struct LaeTrainResult *handle);

/**
 * Number of recorded trace rows.
 *
 * # Safety
 * `handle` must be valid.
 */
size_t lae_result_trace_len(const struct LaeTrainResult *handle);

/**
 * Read one trace cell. Columns: 0 epoch, 1 recon_loss, 2 total_loss,
 * 3 d_align, 4 d_sub, 5 nd, 6 balance_residual, 7 wall_time_s.
 *
 * # Safety
 * All pointers must be valid.
 */
LaeStatus lae_result_trace_value(const struct LaeTrainResult *handle,
                                 size_t row,
                                 size_t col,
                                 double *out);

/**
 * Epoch at which the run diverged, or -1 when it completed.
 *
 * # Safety
 * `handle` must be valid.
 */
int64_t lae_result_diverged_epoch(const struct LaeTrainResult *handle);

/**
 * Axis-alignment distance of the trained decoder against the dataset's
 * top-`k` oracle directions (`k` = latent size of the run).
 *
 * # Safety
 * All pointers must be valid.
 */
LaeStatus lae_result_alignment(const struct LaeTrainResult *handle,
                               const struct LaeDataset *dataset,
                               double *out);

/**
 * Write the run's trace CSV (fixed columns, deterministic bytes unless
 * `include_timing` is set).
 *
 * # Safety
 * `handle` valid; `path` NUL-terminated.
 */
LaeStatus lae_result_write_trace_csv(const struct LaeTrainResult *handle,
                                     const char *path,
                                     bool include_timing);

/**
 * Condition-number lower bound of the non-uniform objective from a
 * descending eigenvalue list (`σ²`, not singular values).
 *
 * # Safety
 * `sigma2` must point to `len` doubles; `out` must be valid.
 */
LaeStatus lae_nonuniform_cond_lower_bound(const double *sigma2, size_t len, size_t k, double *out);

/**
 * Condition-number lower bound of deterministic nested dropout from a
 * descending eigenvalue list.
 *
 * # Safety
 * `sigma2` must point to `len` doubles; `out` must be valid.
 */
LaeStatus lae_nd_cond_lower_bound(const double *sigma2, size_t len, size_t k, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAE_H */
