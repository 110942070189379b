#ifndef IRT_RANK_H
#define IRT_RANK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IrtStatus {
  IRT_STATUS_OK = 0,
  IRT_STATUS_NULL_POINTER = 1,
  IRT_STATUS_INVALID_ARGUMENT = 2,
  IRT_STATUS_IO = 3,
  IRT_STATUS_FORMAT = 4,
  IRT_STATUS_DIMENSION = 5,
  IRT_STATUS_OUT_OF_BOUNDS = 6,
  IRT_STATUS_CONFIG = 7,
  IRT_STATUS_NUMERIC = 8,
  IRT_STATUS_PANIC = 9,
} IrtStatus;

typedef enum IrtAxisKind {
  IRT_AXIS_KIND_TIME = 0,
  IRT_AXIS_KIND_FREQUENCY = 1,
  IRT_AXIS_KIND_COEFFICIENT = 2,
} IrtAxisKind;

// Metric curve handle.
typedef struct IrtCurve IrtCurve;

// Image sequence handle.
typedef struct IrtSequence IrtSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *irt_version(void);

// Message of the last failed call on this thread, empty after a success.
// Valid until the next call on the same thread.
const char *irt_last_error_message(void);

// Load a stack directory (`header.json` + `data.raw`).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum IrtStatus irt_sequence_load(const char *path, struct IrtSequence **out);

// Build a sequence from `n_frames * height * width` values, frame-major and
// row-major, and `n_frames` strictly increasing axis values.
//
// # Safety
// `data` and `axis_values` must point to that many doubles; `out` must be valid.
enum IrtStatus irt_sequence_from_data(const double *data,
                                      size_t width,
                                      size_t height,
                                      size_t n_frames,
                                      enum IrtAxisKind axis_kind,
                                      const double *axis_values,
                                      struct IrtSequence **out);

// # Safety
// `seq` must come from this library and not be used afterwards. Null is ignored.
void irt_sequence_free(struct IrtSequence *seq);

// # Safety
// `seq` must be a live handle; output pointers may be null.
enum IrtStatus irt_sequence_dims(const struct IrtSequence *seq,
                                 size_t *width,
                                 size_t *height,
                                 size_t *n_frames);

// Copy frame `index` into `buf`, which holds `len >= width * height` doubles.
//
// # Safety
// `seq` must be a live handle and `buf` valid for `len` writes.
enum IrtStatus irt_sequence_copy_frame(const struct IrtSequence *seq,
                                       size_t index,
                                       double *buf,
                                       size_t len);

// HI curve with automatic bin count and cell size.
//
// # Safety
// `seq` must be a live handle and `out` valid.
enum IrtStatus irt_hi_curve(const struct IrtSequence *seq, struct IrtCurve **out);

// TVE and REA curves with `phi` phases, `nos` windows per size and `seed`.
// Zero for `phi` or `nos` selects the default.
//
// # Safety
// `seq` must be a live handle and both outputs valid.
enum IrtStatus irt_rea_tve_curves(const struct IrtSequence *seq,
                                  size_t phi,
                                  size_t nos,
                                  uint64_t seed,
                                  struct IrtCurve **out_tve,
                                  struct IrtCurve **out_rea);

// Amplitude and phase stacks of a time sequence.
//
// # Safety
// `seq` must be a live handle and both outputs valid.
enum IrtStatus irt_ppt(const struct IrtSequence *seq,
                       struct IrtSequence **out_amplitude,
                       struct IrtSequence **out_phase);

// Number of points, 0 for a null handle.
//
// # Safety
// `curve` must be null or a live handle.
size_t irt_curve_len(const struct IrtCurve *curve);

// Curve values, valid while the handle lives; null for a null handle.
//
// # Safety
// `curve` must be null or a live handle.
const double *irt_curve_values(const struct IrtCurve *curve);

// Axis values (s or Hz) matching [`irt_curve_values`].
//
// # Safety
// `curve` must be null or a live handle.
const double *irt_curve_axis(const struct IrtCurve *curve);

// # Safety
// `curve` must come from this library and not be used afterwards. Null is ignored.
void irt_curve_free(struct IrtCurve *curve);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRT_RANK_H */
