#ifndef WALLCAST_H
#define WALLCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum WcStatus {
  WC_STATUS_OK = 0,
  // Bad argument, including a buffer of the wrong length.
  WC_STATUS_INVALID_ARGUMENT = 1,
  // Unreadable, missing or malformed input.
  WC_STATUS_DATA = 2,
  // A non-finite value or a degenerate computation.
  WC_STATUS_NUMERICAL = 3,
  WC_STATUS_NULL_POINTER = 4,
  // An internal panic was caught at the boundary.
  WC_STATUS_INTERNAL = 5,
} WcStatus;

// A trained single-step ConvLSTM forecaster.
typedef struct WcBaseModel WcBaseModel;

// A trained meta-learner combining three base forecasts.
typedef struct WcMetaModel WcMetaModel;

// Goodness of fit between predictions and observations.
typedef struct WcScores {
  double mae;
  double r2;
  // Willmott's index of agreement.
  double ioa;
} WcScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message for the last failure on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *wc_last_error(void);

// Trainable parameters of a ConvLSTM stack with the given channel plan
// (input channels first) and spatial size, including the dense head.
//
// # Safety
// `channels` must point to `n_channels` readable values.
enum WcStatus wc_count_params(const size_t *channels,
                              size_t n_channels,
                              size_t spatial,
                              size_t *out);

// Loads a base model saved by the command line tool.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum WcStatus wc_base_model_load(const char *path, struct WcBaseModel **out);

// Releases a base model. Null is ignored.
//
// # Safety
// `model` must come from [`wc_base_model_load`] and not be freed twice.
void wc_base_model_free(struct WcBaseModel *model);

// Number of past profiles the model reads; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t wc_base_model_resolution(const struct WcBaseModel *model);

// Points per profile; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t wc_base_model_points(const struct WcBaseModel *model);

// Trainable parameters; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t wc_base_model_param_count(const struct WcBaseModel *model);

// Predicts the next profile from `resolution` past profiles stored
// oldest first, row by row. Displacements are in metres.
//
// # Safety
// Buffers must hold the stated number of values.
enum WcStatus wc_base_model_predict(const struct WcBaseModel *model,
                                    const double *window,
                                    size_t window_len,
                                    double *out,
                                    size_t out_len);

// Recursively forecasts `horizon` profiles from the end of `history`
// (whole profiles, oldest first). `out` receives `horizon * points` values.
//
// # Safety
// Buffers must hold the stated number of values.
enum WcStatus wc_base_model_rollout(const struct WcBaseModel *model,
                                    const double *history,
                                    size_t history_len,
                                    size_t horizon,
                                    double *out,
                                    size_t out_len);

// Loads a meta-learner saved by the command line tool.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum WcStatus wc_meta_model_load(const char *path, struct WcMetaModel **out);

// Releases a meta-learner. Null is ignored.
//
// # Safety
// `model` must come from [`wc_meta_model_load`] and not be freed twice.
void wc_meta_model_free(struct WcMetaModel *model);

// Trainable parameters; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t wc_meta_model_param_count(const struct WcMetaModel *model);

// Combines base forecasts pointwise. `inputs` holds `n` triples, one
// value per base model in resolution order; `out` receives `n` values.
//
// # Safety
// `inputs` must hold `3 * n` values and `out` must hold `n`.
enum WcStatus wc_meta_model_predict(const struct WcMetaModel *model,
                                    const double *inputs,
                                    size_t n,
                                    double *out);

// Scores `n` paired values.
//
// # Safety
// `pred` and `obs` must hold `n` values; `out` must be writable.
enum WcStatus wc_score(const double *pred, const double *obs, size_t n, struct WcScores *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WALLCAST_H */
