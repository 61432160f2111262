#ifndef EQUISR_H
#define EQUISR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum EquisrStatus {
  EQUISR_STATUS_OK = 0,
  // Null pointer, non-UTF-8 string or overflowing size.
  EQUISR_STATUS_INVALID_ARGUMENT = 1,
  EQUISR_STATUS_CONFIG = 2,
  EQUISR_STATUS_IO = 3,
  EQUISR_STATUS_PARSE = 4,
  EQUISR_STATUS_CHECKPOINT = 5,
  EQUISR_STATUS_SHAPE = 6,
  EQUISR_STATUS_DOMAIN = 7,
  EQUISR_STATUS_UNDEFINED_METRIC = 8,
  // Non-finite values or a failed evaluation.
  EQUISR_STATUS_NUMERIC = 9,
  // Internal invariant broken, including caught panics.
  EQUISR_STATUS_INTERNAL = 10,
} EquisrStatus;

// A height × width × channels image of 64-bit samples.
typedef struct EquisrImage EquisrImage;

// Parameters and architecture of a super-resolution model.
typedef struct EquisrModel EquisrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *equisr_last_error(void);

// Library version as a static NUL-terminated string.
const char *equisr_version(void);

// Copies `h * w * c` samples, laid out row-major with channels last.
//
// # Safety
// `data` must point to `h * w * c` readable doubles and `out` must be writable.
enum EquisrStatus equisr_image_new(size_t h,
                                   size_t w,
                                   size_t c,
                                   const double *data,
                                   struct EquisrImage **out);

// Reads a binary PPM (P6) or PGM (P5) file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` must be writable.
enum EquisrStatus equisr_image_read(const char *path, struct EquisrImage **out);

// Writes a 1-channel image as PGM and a 3-channel image as PPM.
//
// # Safety
// `img` must be a live handle and `path` a NUL-terminated string.
enum EquisrStatus equisr_image_write(const struct EquisrImage *img, const char *path);

// Height, width and channel count; any output pointer may be null.
//
// # Safety
// `img` must be a live handle; non-null outputs must be writable.
enum EquisrStatus equisr_image_shape(const struct EquisrImage *img,
                                     size_t *h,
                                     size_t *w,
                                     size_t *c);

// Borrowed view of the samples, valid until the image is freed.
// Returns null for a null handle.
//
// # Safety
// `img` must be null or a live handle.
const double *equisr_image_data(const struct EquisrImage *img);

// # Safety
// `img` must be null or a handle not yet freed.
void equisr_image_free(struct EquisrImage *img);

// Randomly initialized model from a run configuration in the JSON format
// of the command-line `--config` file; null selects the defaults.
//
// # Safety
// `config_json` must be null or NUL-terminated; `out` must be writable.
enum EquisrStatus equisr_model_random(const char *config_json,
                                      uint64_t seed,
                                      struct EquisrModel **out);

// Loads a checkpoint manifest written by `equisr train`.
//
// # Safety
// `path` must be NUL-terminated and `out` writable.
enum EquisrStatus equisr_model_load(const char *path, struct EquisrModel **out);

// # Safety
// `model` must be null or a handle not yet freed.
void equisr_model_free(struct EquisrModel *model);

// Upscales `img` by `scale` (≥ 1); the output side is `round(scale * side)`.
//
// # Safety
// `model` and `img` must be live handles and `out` writable.
enum EquisrStatus equisr_super_resolve(const struct EquisrModel *model,
                                       const struct EquisrImage *img,
                                       double scale,
                                       struct EquisrImage **out);

// NMSE and NMAE between `SR(rotate(img))` and `rotate(SR(img))`. The
// inscribed-disk mask applies when `angle_rad` is not a right-angle multiple.
//
// # Safety
// `model` and `img` must be live handles; `nmse` and `nmae` may be null.
enum EquisrStatus equisr_equivariance_error(const struct EquisrModel *model,
                                            const struct EquisrImage *img,
                                            double angle_rad,
                                            double scale,
                                            double *nmse,
                                            double *nmae);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* EQUISR_H */
