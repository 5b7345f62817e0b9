/* C interface to the grnlfa temporal link-prediction engine. */

#ifndef GRNLFA_H
#define GRNLFA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call. Anything other than OK leaves a
// description in `grnlfa_last_error`.
typedef enum GrnlfaStatus {
  GRNLFA_STATUS_OK = 0,
  GRNLFA_STATUS_ERR_NULL_ARGUMENT = 1,
  GRNLFA_STATUS_ERR_INVALID_ARGUMENT = 2,
  GRNLFA_STATUS_ERR_PARSE = 3,
  GRNLFA_STATUS_ERR_IO = 4,
  GRNLFA_STATUS_ERR_DIMENSION = 5,
  GRNLFA_STATUS_ERR_EMPTY_SET = 6,
  GRNLFA_STATUS_ERR_INTERNAL = 7,
} GrnlfaStatus;

// Opaque handle over a loaded temporal network.
typedef struct GrnlfaNetwork GrnlfaNetwork;

// Opaque handle over a trained model: the factor matrices picked by
// validation RMSE plus the run's summary metrics.
typedef struct GrnlfaResult GrnlfaResult;

// Training controls. Obtain defaults from `grnlfa_train_options_default`
// and override fields as needed; every field is validated by
// `grnlfa_train`.
typedef struct GrnlfaTrainOptions {
  // 0 = dense NMF baseline, 1 = sparse model without the graph term,
  // 2 = graph-regularized sparse model.
  int32_t model;
  // Latent dimension, >= 1.
  size_t k;
  // Graph regularization strength, >= 0.
  double alpha;
  // Temporal decay in (0, 1]; drives both the training-target decay
  // and the historical graph combination.
  double theta;
  // Training round cap, >= 1.
  size_t max_epochs;
  // Convergence threshold on the objective change, >= 0.
  double tolerance;
  // Denominator guard of the multiplicative updates, > 0.
  double epsilon;
  // Factor initialization seed.
  uint64_t seed;
  // Scale the graph pull by each receiver's observation count.
  bool lambda_scaling;
  // Training-target aggregation: 0 = decayed sum, 1 = plain sum,
  // 2 = last slice.
  int32_t aggregation;
  // Receiver-graph weighting: 0 = co-sender product, 1 = binarized
  // co-occurrence, 2 = cosine-normalized.
  int32_t weight_scheme;
} GrnlfaTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of the underlying engine as a static NUL-terminated string.
const char *grnlfa_version(void);

// Description of the most recent failure on this thread; empty string if
// nothing failed yet. Valid until the next failing call on this thread.
const char *grnlfa_last_error(void);

// The default training configuration (graph-regularized model, K = 20,
// alpha = 0.01, theta = 0.5, 1000 epochs, tolerance 1e-5, seed 42).
struct GrnlfaTrainOptions grnlfa_train_options_default(void);

// Parse a network from text in the `grnlfa-net v1` format, applying the
// value transform (0 = identity, 1 = log1p).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be a valid pointer.
enum GrnlfaStatus grnlfa_network_read_text(const char *text,
                                           int32_t transform,
                                           struct GrnlfaNetwork **out);

// Read a network file in the `grnlfa-net v1` format.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be a valid pointer.
enum GrnlfaStatus grnlfa_network_read_file(const char *path,
                                           int32_t transform,
                                           struct GrnlfaNetwork **out);

// Generate a synthetic network from a `synthetic:` spec string such as
// `synthetic:u=20,s=20,k=3,t=6,density=0.3,seed=7`.
//
// # Safety
// `spec` must be a NUL-terminated string; `out` must be a valid pointer.
enum GrnlfaStatus grnlfa_network_synthetic(const char *spec,
                                           int32_t transform,
                                           struct GrnlfaNetwork **out);

// Build a network from parallel entry arrays. `slices` holds 1-based
// slice indices in 1..=num_slices; duplicate (slice, sender, receiver)
// entries are merged by summation before the transform applies.
//
// # Safety
// The four arrays must each hold `len` readable elements; `out` must be
// a valid pointer.
enum GrnlfaStatus grnlfa_network_from_entries(size_t num_senders,
                                              size_t num_receivers,
                                              size_t num_slices,
                                              const size_t *slices,
                                              const size_t *senders,
                                              const size_t *receivers,
                                              const double *values,
                                              size_t len,
                                              int32_t transform,
                                              struct GrnlfaNetwork **out);

// Dimensions of a network: sender count, receiver count, slice count.
// Any output pointer may be NULL to skip that value.
//
// # Safety
// `network` must be a live handle from a constructor.
enum GrnlfaStatus grnlfa_network_dims(const struct GrnlfaNetwork *network,
                                      size_t *num_senders,
                                      size_t *num_receivers,
                                      size_t *num_slices);

// Total number of known entries across all slices.
//
// # Safety
// `network` must be a live handle; `out` must be a valid pointer.
enum GrnlfaStatus grnlfa_network_entry_count(const struct GrnlfaNetwork *network, size_t *out);

// Release a network handle. NULL is a no-op.
//
// # Safety
// `network` must be NULL or a live handle; the handle is dead afterward.
void grnlfa_network_free(struct GrnlfaNetwork *network);

// Train a model on the network's temporal split (earlier slices for
// training, next-to-last for validation, last for testing). The returned
// handle carries the factors that scored the best validation RMSE.
//
// # Safety
// `network` must be a live handle, `options` and `out` valid pointers.
enum GrnlfaStatus grnlfa_train(const struct GrnlfaNetwork *network,
                               const struct GrnlfaTrainOptions *options,
                               struct GrnlfaResult **out);

// Summary metrics of a training run. Validation values are the best seen
// across epochs; test values come from the factors at the best
// validation-RMSE epoch (NaN when the test slice has no entries). Any
// output pointer may be NULL to skip that value.
//
// # Safety
// `result` must be a live handle from `grnlfa_train`.
enum GrnlfaStatus grnlfa_result_metrics(const struct GrnlfaResult *result,
                                        double *rmse_val,
                                        double *mae_val,
                                        double *rmse_test,
                                        double *mae_test);

// Number of epochs the run executed and whether it stopped by
// convergence (vs hitting the epoch cap). Either output may be NULL.
//
// # Safety
// `result` must be a live handle from `grnlfa_train`.
enum GrnlfaStatus grnlfa_result_progress(const struct GrnlfaResult *result,
                                         size_t *epochs_run,
                                         bool *converged);

// Factor-matrix dimensions: sender count, receiver count, latent
// dimension. Any output pointer may be NULL.
//
// # Safety
// `result` must be a live handle from `grnlfa_train`.
enum GrnlfaStatus grnlfa_result_dims(const struct GrnlfaResult *result,
                                     size_t *num_senders,
                                     size_t *num_receivers,
                                     size_t *k);

// Predicted value for one (sender, receiver) pair, in the transformed
// value space the network was loaded with.
//
// # Safety
// `result` must be a live handle; `out` must be a valid pointer.
enum GrnlfaStatus grnlfa_result_predict(const struct GrnlfaResult *result,
                                        size_t sender,
                                        size_t receiver,
                                        double *out);

// Copy the factor matrices out row-major: X is num_senders x k, Y is
// num_receivers x k. Either destination may be NULL to skip it; a
// non-NULL destination's length must match exactly.
//
// # Safety
// `result` must be a live handle; non-NULL destinations must hold the
// stated number of writable elements.
enum GrnlfaStatus grnlfa_result_copy_factors(const struct GrnlfaResult *result,
                                             double *x_out,
                                             size_t x_len,
                                             double *y_out,
                                             size_t y_len);

// Release a result handle. NULL is a no-op.
//
// # Safety
// `result` must be NULL or a live handle; the handle is dead afterward.
void grnlfa_result_free(struct GrnlfaResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRNLFA_H */
