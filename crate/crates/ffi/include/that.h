#ifndef THAT_H
#define THAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ThatStatus {
  THAT_STATUS_OK = 0,
  THAT_STATUS_NULL_POINTER = 1,
  THAT_STATUS_INVALID_ARGUMENT = 2,
  THAT_STATUS_CONFIG = 3,
  THAT_STATUS_DIMENSION = 4,
  THAT_STATUS_FORMAT = 5,
  THAT_STATUS_IO = 6,
  THAT_STATUS_NUMERICAL = 7,
  THAT_STATUS_INTERNAL = 8,
} ThatStatus;

/**
 * A hyperspectral cube (a pan image is a one-band cube).
 */
typedef struct ThatCube ThatCube;

/**
 * A network with single-precision weights.
 */
typedef struct ThatModel ThatModel;

/**
 * Fusion quality scores with per-band PSNR.
 */
typedef struct ThatReport ThatReport;

/**
 * Scalar scores of a [`ThatReport`].
 */
typedef struct ThatMetrics {
  double psnr_db;
  double ssim;
  double sam_deg;
  double ergas;
  double scc;
} ThatMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *that_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *that_version(void);

/**
 * Creates a cube from `height·width·bands` band-major values.
 *
 * # Safety
 * `values` must point to `height·width·bands` readable floats and `out`
 * must be a valid pointer.
 */
enum ThatStatus that_cube_new(size_t height,
                              size_t width,
                              size_t bands,
                              const float *values,
                              struct ThatCube **out);

/**
 * Loads an HSC1 cube file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ThatStatus that_cube_load(const char *path, struct ThatCube **out);

/**
 * Writes a cube as an HSC1 file.
 *
 * # Safety
 * `cube` must be a live handle and `path` a NUL-terminated string.
 */
enum ThatStatus that_cube_save(const struct ThatCube *cube, const char *path);

/**
 * Deterministic synthetic scene of `size×size` pixels.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ThatStatus that_cube_synthetic(uint64_t seed,
                                    size_t size,
                                    size_t bands,
                                    struct ThatCube **out);

/**
 * Extents of a cube. Any output pointer may be null.
 *
 * # Safety
 * `cube` must be a live handle; non-null outputs must be writable.
 */
enum ThatStatus that_cube_dims(const struct ThatCube *cube,
                               size_t *height,
                               size_t *width,
                               size_t *bands);

/**
 * Copies the band-major values into `buf`, which must hold exactly
 * `height·width·bands` floats (`len`).
 *
 * # Safety
 * `cube` must be a live handle and `buf` must have room for `len` floats.
 */
enum ThatStatus that_cube_copy_values(const struct ThatCube *cube, float *buf, size_t len);

/**
 * Releases a cube. Null is ignored.
 *
 * # Safety
 * `cube` must come from this library and not be used afterwards.
 */
void that_cube_free(struct ThatCube *cube);

/**
 * Reduced-resolution pair of a reference cube: blurred and decimated LR
 * cube plus the synthesized pan image, with the default blur for `scale`.
 *
 * # Safety
 * `reference` must be a live handle; outputs must be valid pointers.
 */
enum ThatStatus that_wald_degrade(const struct ThatCube *reference,
                                  size_t scale,
                                  struct ThatCube **out_lr,
                                  struct ThatCube **out_pan);

/**
 * Fresh network with the given sizes and every block component enabled.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ThatStatus that_model_new(size_t bands,
                               size_t channels,
                               size_t blocks,
                               size_t heads,
                               size_t window,
                               size_t scale,
                               uint64_t seed,
                               struct ThatModel **out);

/**
 * Loads a checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ThatStatus that_model_load(const char *path, struct ThatModel **out);

/**
 * Writes a checkpoint.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum ThatStatus that_model_save(const struct ThatModel *model, const char *path);

/**
 * Number of learnable scalars, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uint64_t that_model_param_count(const struct ThatModel *model);

/**
 * Fuses an LR cube with a one-band pan cube.
 *
 * # Safety
 * Handles must be live; `out` must be a valid pointer.
 */
enum ThatStatus that_model_predict(const struct ThatModel *model,
                                   const struct ThatCube *lr,
                                   const struct ThatCube *pan,
                                   struct ThatCube **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void that_model_free(struct ThatModel *model);

/**
 * Scores `pred` against `reference` at resolution ratio `scale`.
 *
 * # Safety
 * Handles must be live; `out` must be a valid pointer.
 */
enum ThatStatus that_evaluate(const struct ThatCube *pred,
                              const struct ThatCube *reference,
                              size_t scale,
                              struct ThatReport **out);

/**
 * Scalar scores of a report.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum ThatStatus that_report_metrics(const struct ThatReport *report, struct ThatMetrics *out);

/**
 * Number of per-band PSNR entries, or 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t that_report_band_count(const struct ThatReport *report);

/**
 * Copies per-band PSNR into `buf` of exactly `len` doubles.
 *
 * # Safety
 * `report` must be a live handle and `buf` must have room for `len` doubles.
 */
enum ThatStatus that_report_band_psnr(const struct ThatReport *report, double *buf, size_t len);

/**
 * Releases a report. Null is ignored.
 *
 * # Safety
 * `report` must come from this library and not be used afterwards.
 */
void that_report_free(struct ThatReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THAT_H */
