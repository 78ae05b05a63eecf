#ifndef MINISTL_H
#define MINISTL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum MinistlStatus {
  MINISTL_STATUS_OK = 0,
  /**
   * A null pointer, non UTF-8 string or wrongly sized buffer.
   */
  MINISTL_STATUS_INVALID_ARGUMENT = 1,
  MINISTL_STATUS_CONFIG = 2,
  MINISTL_STATUS_REGISTRY = 3,
  MINISTL_STATUS_GEOMETRY = 4,
  MINISTL_STATUS_CONTRACT = 5,
  MINISTL_STATUS_IO = 6,
  MINISTL_STATUS_FORMAT = 7,
  MINISTL_STATUS_RUNTIME = 8,
  MINISTL_STATUS_PANIC = 9,
} MinistlStatus;

/**
 * Opaque dataset handle.
 */
typedef struct MinistlDataset MinistlDataset;

/**
 * Opaque model handle.
 */
typedef struct MinistlModel MinistlModel;

/**
 * Frame geometry and horizons of a model or dataset.
 */
typedef struct MinistlShape {
  size_t channels;
  size_t height;
  size_t width;
  /**
   * Context frames.
   */
  size_t t;
  /**
   * Predicted frames.
   */
  size_t t_prime;
} MinistlShape;

/**
 * Quality metrics of a prediction against its target.
 */
typedef struct MinistlMetrics {
  /**
   * Squared error summed over a frame, averaged over frames.
   */
  double mse_paper;
  double mae_paper;
  double mse_pixel;
  double mae_pixel;
  double ssim;
  /**
   * Decibels; infinite for a perfect prediction.
   */
  double psnr;
} MinistlMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ministl_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated and
 * NUL-terminated) and returns the full message length in bytes, excluding
 * the terminator. Passing a null `buf` only queries the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ministl_last_error(char *buf, size_t len);

/**
 * Builds a freshly initialised model from an experiment config given as
 * YAML text. The model entry, frame geometry and seed come from the config.
 *
 * # Safety
 * `config_yaml` must be a NUL-terminated string; `out` must be writable.
 */
enum MinistlStatus ministl_model_from_config(const char *config_yaml, struct MinistlModel **out);

/**
 * Loads a model checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MinistlStatus ministl_model_load(const char *path, struct MinistlModel **out);

/**
 * Writes a model checkpoint.
 *
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum MinistlStatus ministl_model_save(const struct MinistlModel *model, const char *path);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void ministl_model_free(struct MinistlModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum MinistlStatus ministl_model_shape(const struct MinistlModel *model, struct MinistlShape *out);

/**
 * Number of trainable scalars.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum MinistlStatus ministl_model_param_count(const struct MinistlModel *model, uint64_t *out);

/**
 * Multiply-accumulate count of one forward pass at batch size 1.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum MinistlStatus ministl_model_macs(const struct MinistlModel *model, uint64_t *out);

/**
 * Predicts `t_prime` frames for `batch` clips. `context` holds
 * `batch·t·C·H·W` values in [0, 1]; `out` receives `batch·t_prime·C·H·W`.
 *
 * # Safety
 * `model` must be a live handle and the buffers must hold the stated lengths.
 */
enum MinistlStatus ministl_model_predict(const struct MinistlModel *model,
                                         const float *context,
                                         size_t context_len,
                                         size_t batch,
                                         float *out,
                                         size_t out_len);

/**
 * Builds the train (`split` 0) or test (`split` 1) dataset described by an
 * experiment config. Clips are rendered on demand.
 *
 * # Safety
 * `config_yaml` must be a NUL-terminated string; `out` must be writable.
 */
enum MinistlStatus ministl_dataset_from_config(const char *config_yaml,
                                               uint32_t split,
                                               struct MinistlDataset **out);

/**
 * Releases a dataset handle. Null is ignored.
 *
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void ministl_dataset_free(struct MinistlDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum MinistlStatus ministl_dataset_len(const struct MinistlDataset *dataset, size_t *out);

/**
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum MinistlStatus ministl_dataset_shape(const struct MinistlDataset *dataset,
                                         struct MinistlShape *out);

/**
 * Renders clip `index` into `context` (`t·C·H·W` values) and `target`
 * (`t_prime·C·H·W` values).
 *
 * # Safety
 * `dataset` must be a live handle and the buffers must hold the stated lengths.
 */
enum MinistlStatus ministl_dataset_get(const struct MinistlDataset *dataset,
                                       size_t index,
                                       float *context,
                                       size_t context_len,
                                       float *target,
                                       size_t target_len);

/**
 * Writes the hex content hash of the whole dataset (64 characters plus NUL)
 * into `buf`, which must hold at least 65 bytes.
 *
 * # Safety
 * `dataset` must be a live handle; `buf` must point to `len` writable bytes.
 */
enum MinistlStatus ministl_dataset_hash(const struct MinistlDataset *dataset,
                                        char *buf,
                                        size_t len);

/**
 * Scores `frames` predicted frames of geometry `C×H×W` against their
 * targets. Both buffers hold `frames·C·H·W` values.
 *
 * # Safety
 * Both buffers must hold `frames·channels·height·width` values; `out` must be writable.
 */
enum MinistlStatus ministl_metrics(const float *prediction,
                                   const float *target,
                                   size_t frames,
                                   size_t channels,
                                   size_t height,
                                   size_t width,
                                   struct MinistlMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MINISTL_H */
