#ifndef LEAFX_H
#define LEAFX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum LeafxStatus {
  LEAFX_STATUS_OK = 0,
  LEAFX_STATUS_NULL_POINTER = 1,
  LEAFX_STATUS_INVALID_ARGUMENT = 2,
  LEAFX_STATUS_OUT_OF_RANGE = 3,
  LEAFX_STATUS_INVALID_CONFIG = 10,
  LEAFX_STATUS_INVALID_PARAM = 11,
  LEAFX_STATUS_SIGNAL_TOO_SHORT = 12,
  LEAFX_STATUS_SHAPE_MISMATCH = 13,
  LEAFX_STATUS_NEGATIVE_POWER = 14,
  LEAFX_STATUS_PRECONDITION = 15,
  LEAFX_STATUS_NON_SMOOTH = 16,
  LEAFX_STATUS_UNSUPPORTED_FORMAT = 17,
  LEAFX_STATUS_FORMAT = 18,
  LEAFX_STATUS_IO = 19,
  LEAFX_STATUS_PANIC = 99,
} LeafxStatus;

/**
 * Extracted feature planes in storage precision.
 */
typedef struct LeafxFeatures LeafxFeatures;

/**
 * Configuration plus optional explicit parameters.
 */
typedef struct LeafxFrontend LeafxFrontend;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *leafx_version(void);

/**
 * Message for the most recent failure on this thread, or NULL after a success.
 * The pointer stays valid until the next leafx call on the same thread.
 */
const char *leafx_last_error_message(void);

/**
 * Front-end with the default configuration and mel-spaced parameters.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum LeafxStatus leafx_frontend_new_default(struct LeafxFrontend **out);

/**
 * Front-end from text files. Either path may be NULL: a NULL config selects the
 * defaults and a NULL params file selects mel-spaced parameters.
 *
 * # Safety
 * Non-NULL paths must be NUL-terminated strings. `out` must be writable.
 */
enum LeafxStatus leafx_frontend_from_files(const char *config_path,
                                           const char *params_path,
                                           struct LeafxFrontend **out);

/**
 * Number of filterbank bins M.
 *
 * # Safety
 * `frontend` must be NULL or a live handle.
 */
size_t leafx_frontend_num_bins(const struct LeafxFrontend *frontend);

/**
 * # Safety
 * `frontend` must be NULL or a handle not yet freed.
 */
void leafx_frontend_free(struct LeafxFrontend *frontend);

/**
 * Run the front-end on mono samples.
 *
 * # Safety
 * `samples` must point to `len` readable doubles (it may be NULL when `len`
 * is 0). `frontend` must be a live handle and `out` writable.
 */
enum LeafxStatus leafx_extract(const struct LeafxFrontend *frontend,
                               const double *samples,
                               size_t len,
                               double sample_rate,
                               struct LeafxFeatures **out);

/**
 * Channel count C, bins M and frames L. Any output pointer may be NULL.
 *
 * # Safety
 * `features` must be a live handle; non-NULL outputs must be writable.
 */
enum LeafxStatus leafx_features_dims(const struct LeafxFeatures *features,
                                     size_t *channels,
                                     size_t *bins,
                                     size_t *frames);

/**
 * Name of channel `index`, or NULL when out of range. Owned by the handle.
 *
 * # Safety
 * `features` must be NULL or a live handle.
 */
const char *leafx_features_channel_name(const struct LeafxFeatures *features, size_t index);

/**
 * Copy plane `index` into `dst`, row-major `[bin][frame]`. `len` must equal M·L.
 * Undefined elements are 0.
 *
 * # Safety
 * `dst` must point to `len` writable floats.
 */
enum LeafxStatus leafx_features_copy_plane(const struct LeafxFeatures *features,
                                           size_t index,
                                           float *dst,
                                           size_t len);

/**
 * Copy the definedness mask of channel `index`, one byte per element (1 = defined).
 *
 * # Safety
 * `dst` must point to `len` writable bytes.
 */
enum LeafxStatus leafx_features_copy_mask(const struct LeafxFeatures *features,
                                          size_t index,
                                          uint8_t *dst,
                                          size_t len);

/**
 * Write the features as an `LFX1` container file.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum LeafxStatus leafx_features_write(const struct LeafxFeatures *features, const char *path);

/**
 * # Safety
 * `features` must be NULL or a handle not yet freed.
 */
void leafx_features_free(struct LeafxFeatures *features);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEAFX_H */
