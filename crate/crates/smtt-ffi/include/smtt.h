#ifndef SMTT_H
#define SMTT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Solver selector for `SmttConfig::solver`.
 */
typedef enum {
  SMTT_SOLVER_APG = 0,
  SMTT_SOLVER_ALTERNATING = 1,
  SMTT_SOLVER_SUBGRADIENT = 2,
} SmttSolver;

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum {
  SMTT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SMTT_STATUS_NULL_POINTER = 1,
  /**
   * A parameter, shape, or geometry constraint was violated.
   */
  SMTT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The solve diverged or produced non-finite values.
   */
  SMTT_STATUS_NUMERICAL_ERROR = 3,
  /**
   * Internal panic; the handle is left untouched but should be freed.
   */
  SMTT_STATUS_INTERNAL_ERROR = 4,
} SmttStatus;

/**
 * Opaque tracker handle.
 */
typedef struct SmttTracker SmttTracker;

/**
 * Tracker configuration. Obtain defaults from `smtt_config_default` and
 * override fields as needed before passing to `smtt_tracker_new`.
 */
typedef struct {
  SmttSolver solver;
  double lambda1;
  double lambda2;
  double mu;
  double tol;
  uintptr_t max_iter;
  uintptr_t particles;
  uintptr_t templates;
  uintptr_t patch_h;
  uintptr_t patch_w;
  uintptr_t update_period;
  double jitter_px;
  double alpha;
  double std_x;
  double std_y;
  double std_scale;
  /**
   * Similarity bandwidth; any value <= 0 selects the median heuristic.
   */
  double sigma;
  uint64_t seed;
} SmttConfig;

/**
 * Axis-aligned box, top-left corner convention, in pixels.
 */
typedef struct {
  double x;
  double y;
  double w;
  double h;
} SmttBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Fill `out` with the default configuration.
 */
SmttStatus smtt_config_default(SmttConfig *out);

/**
 * Create a tracker from the first frame and the initial target box.
 *
 * `frame` is `width * height` row-major doubles in [0, 1]. On success
 * `*out` owns the tracker; release it with `smtt_tracker_free`.
 *
 * # Safety
 * `frame` must point to at least `width * height` readable doubles and
 * `out` must be a valid writable pointer.
 */
SmttStatus smtt_tracker_new(const double *frame,
                            uintptr_t width,
                            uintptr_t height,
                            SmttBox init_box,
                            const SmttConfig *config,
                            SmttTracker **out);

/**
 * Advance the tracker by one frame and write the estimated box to `out_box`.
 *
 * On solver failure the previous box is carried forward and reported; this
 * still returns `SMTT_STATUS_OK` so a stream is never interrupted.
 *
 * # Safety
 * `tracker` must come from `smtt_tracker_new`, `frame` must point to at
 * least `width * height` readable doubles, and `out_box` must be writable.
 */
SmttStatus smtt_tracker_track(SmttTracker *tracker,
                              const double *frame,
                              uintptr_t width,
                              uintptr_t height,
                              SmttBox *out_box);

/**
 * Number of frames (since creation) whose solve failed and fell back to
 * carrying the previous box forward. Returns 0 for a null handle.
 *
 * # Safety
 * `tracker` must be null or come from `smtt_tracker_new`.
 */
uintptr_t smtt_tracker_failed_frames(const SmttTracker *tracker);

/**
 * Release a tracker. Passing null is a no-op.
 *
 * # Safety
 * `tracker` must be null or an owned pointer from `smtt_tracker_new`, and
 * must not be used afterwards.
 */
void smtt_tracker_free(SmttTracker *tracker);

/**
 * Pointer to a NUL-terminated description of the most recent error on this
 * thread. Valid until the next failing call on the same thread.
 */
const char *smtt_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMTT_H */
