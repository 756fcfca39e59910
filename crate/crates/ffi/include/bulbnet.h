#ifndef BULBNET_H
#define BULBNET_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum BulbnetStatus {
  BULBNET_STATUS_OK = 0,
  BULBNET_STATUS_NULL_POINTER = 1,
  BULBNET_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration, or the label was already trained.
   */
  BULBNET_STATUS_CONFIG = 3,
  /**
   * Missing, malformed, non-finite or mismatched input data or checkpoint.
   */
  BULBNET_STATUS_DATA = 4,
  /**
   * Numeric blow-up, empty inputs or a network that cannot be built.
   */
  BULBNET_STATUS_NUMERIC = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  BULBNET_STATUS_PANIC = 6,
} BulbnetStatus;

/**
 * Opaque trained or untrained network.
 */
typedef struct BulbnetModel BulbnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *bulbnet_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bulbnet_version(void);

/**
 * Builds a naive network whose preprocessing is fitted on `n_samples`
 * row-major reference samples of length `dim`.
 *
 * `config_json` may be null for the defaults; otherwise it is a JSON
 * model configuration where missing fields take their defaults. `seed`
 * overrides both random streams of the configuration.
 *
 * # Safety
 * `reference` must point to `n_samples * dim` doubles, `config_json` must
 * be null or NUL-terminated, and `out` must be writable.
 */
enum BulbnetStatus bulbnet_model_new(const char *config_json,
                                     const double *reference,
                                     size_t n_samples,
                                     size_t dim,
                                     uint64_t seed,
                                     struct BulbnetModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void bulbnet_model_free(struct BulbnetModel *model);

/**
 * Input dimension the model expects, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bulbnet_model_dimension(const struct BulbnetModel *model);

/**
 * Number of stored classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bulbnet_model_class_count(const struct BulbnetModel *model);

/**
 * Learns one sample under `label` in a single exposure.
 *
 * # Safety
 * `model` must be a live handle, `sample` must point to `dim` doubles and
 * `label` must be NUL-terminated.
 */
enum BulbnetStatus bulbnet_model_train(struct BulbnetModel *model,
                                       const double *sample,
                                       size_t dim,
                                       const char *label);

/**
 * Classifies one sample. On success `*label_out` receives a string to be
 * released with [`bulbnet_string_free`] and `*similarity_out`, when not
 * null, the winning similarity.
 *
 * # Safety
 * `model` must be a live handle, `sample` must point to `dim` doubles,
 * `label_out` must be writable and `similarity_out` null or writable.
 */
enum BulbnetStatus bulbnet_model_predict(const struct BulbnetModel *model,
                                         const double *sample,
                                         size_t dim,
                                         char **label_out,
                                         double *similarity_out);

/**
 * Writes a JSON checkpoint to `path`.
 *
 * # Safety
 * `model` must be a live handle and `path` NUL-terminated.
 */
enum BulbnetStatus bulbnet_model_save(const struct BulbnetModel *model, const char *path);

/**
 * Restores a model from a checkpoint written by [`bulbnet_model_save`].
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum BulbnetStatus bulbnet_model_load(const char *path, struct BulbnetModel **out);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void bulbnet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BULBNET_H */
