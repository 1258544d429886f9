#ifndef GROUNDCUE_H
#define GROUNDCUE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum GcStatus {
  GC_STATUS_OK = 0,
  GC_STATUS_NULL_ARGUMENT = 1,
  GC_STATUS_INVALID_ARGUMENT = 2,
  GC_STATUS_IMAGING = 3,
  GC_STATUS_IO = 4,
  GC_STATUS_CONFIG = 5,
  GC_STATUS_BACKEND = 6,
  GC_STATUS_TASK = 7,
  GC_STATUS_EVAL = 8,
  GC_STATUS_BUFFER_TOO_SMALL = 9,
  GC_STATUS_PANIC = 10,
} GcStatus;

// How the final box of a grounding call was produced.
typedef enum GcProvenance {
  GC_PROVENANCE_REFINED_LARGE = 0,
  GC_PROVENANCE_REFINED_SMALL = 1,
  GC_PROVENANCE_REFINED_FALLBACK_ALTERNATE = 2,
  GC_PROVENANCE_DIFFUSION_FALLBACK = 3,
  GC_PROVENANCE_NONE = 4,
} GcProvenance;

// Opaque RGB8 raster.
typedef struct GcImage GcImage;

// Opaque configured pipeline; safe to share across threads.
typedef struct GcPipeline GcPipeline;

typedef struct GcEnhanceParams {
  double clahe_clip_limit;
  uint32_t tile_cols;
  uint32_t tile_rows;
  double unsharp_sigma;
  double unsharp_amount;
} GcEnhanceParams;

typedef struct GcCueParams {
  uint8_t r_min;
  uint8_t g_max;
  uint8_t b_max;
  size_t min_component_area;
  double nesting_containment;
} GcCueParams;

// Half-open pixel box: `x_min <= x < x_max`, `y_min <= y < y_max`.
typedef struct GcBox {
  int64_t x_min;
  int64_t y_min;
  int64_t x_max;
  int64_t y_max;
} GcBox;

typedef struct GcGroundResult {
  // False when no box was found; `bbox` is then all zeros.
  bool has_box;
  struct GcBox bbox;
  enum GcProvenance provenance;
  // Number of red cue boxes found in the edited image.
  size_t n_cues;
} GcGroundResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next `gc_` call on the same thread.
const char *gc_last_error(void);

// Library version as a static NUL-terminated string.
const char *gc_version(void);

struct GcEnhanceParams gc_enhance_params_default(void);

struct GcCueParams gc_cue_params_default(void);

// Intersection over union of two non-empty boxes.
//
// # Safety
// Pointers must be valid for reads (`a`, `b`) or writes (`out`).
enum GcStatus gc_iou(const struct GcBox *a, const struct GcBox *b, double *out_iou);

// Copies `len` bytes of row-major RGB8 data into a new image.
//
// # Safety
// `rgb` must point to `len` readable bytes; `out_image` must be writable.
enum GcStatus gc_image_new(uint32_t width,
                           uint32_t height,
                           const uint8_t *rgb,
                           size_t len,
                           struct GcImage **out_image);

// Decodes a PNG or JPEG file.
//
// # Safety
// `path` must be a NUL-terminated string; `out_image` must be writable.
enum GcStatus gc_image_load(const char *path, struct GcImage **out_image);

// # Safety
// `image` must be a live handle; `path` a NUL-terminated string.
enum GcStatus gc_image_save_png(const struct GcImage *image, const char *path);

// Width in pixels, 0 for a null handle.
//
// # Safety
// `image` must be null or a live handle.
uint32_t gc_image_width(const struct GcImage *image);

// Height in pixels, 0 for a null handle.
//
// # Safety
// `image` must be null or a live handle.
uint32_t gc_image_height(const struct GcImage *image);

// Borrowed view of the RGB8 bytes, valid while the handle lives. Writes the
// byte count to `out_len` when it is not null.
//
// # Safety
// `image` must be null or a live handle; `out_len` null or writable.
const uint8_t *gc_image_data(const struct GcImage *image, size_t *out_len);

// # Safety
// `image` must be null or a handle not yet freed.
void gc_image_free(struct GcImage *image);

// Haze reduction and sharpening; `params` may be NULL for defaults.
//
// # Safety
// `image` must be a live handle, `params` null or readable, `out_image` writable.
enum GcStatus gc_preprocess(const struct GcImage *image,
                            const struct GcEnhanceParams *params,
                            struct GcImage **out_image);

// Finds red outline boxes; `params` may be NULL for defaults. The total
// count is always written to `out_count`. When it exceeds `capacity` the
// call returns `GC_STATUS_BUFFER_TOO_SMALL` after filling what fits.
//
// # Safety
// `boxes` must have room for `capacity` entries (may be null if 0).
enum GcStatus gc_extract_cues(const struct GcImage *image,
                              const struct GcCueParams *params,
                              struct GcBox *boxes,
                              size_t capacity,
                              size_t *out_count);

// Builds a pipeline from TOML configuration text.
//
// # Safety
// `toml` must be a NUL-terminated string; `out_pipeline` writable.
enum GcStatus gc_pipeline_new(const char *toml, struct GcPipeline **out_pipeline);

// Grounds `query` in `image`. Network calls go to the configured endpoints.
//
// # Safety
// Handles must be live; strings NUL-terminated; `out_result` writable.
enum GcStatus gc_pipeline_ground(const struct GcPipeline *pipeline,
                                 const char *task_id,
                                 const struct GcImage *image,
                                 const char *query,
                                 struct GcGroundResult *out_result);

// # Safety
// `pipeline` must be null or a handle not yet freed.
void gc_pipeline_free(struct GcPipeline *pipeline);

// mIoU and Acc@t over `n` pairs. `has_prediction` may be NULL when every
// prediction is present; a missing prediction scores IoU 0. `out_acc`
// receives one fraction per threshold.
//
// # Safety
// Arrays must hold `n` (or `n_thresholds`) elements; outputs writable.
enum GcStatus gc_metrics(const struct GcBox *predictions,
                         const bool *has_prediction,
                         const struct GcBox *truths,
                         size_t n,
                         const double *thresholds,
                         size_t n_thresholds,
                         double *out_miou,
                         double *out_acc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUNDCUE_H */
