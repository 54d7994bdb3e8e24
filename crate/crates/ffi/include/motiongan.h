#ifndef MOTIONGAN_H
#define MOTIONGAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MgStatus {
  MG_STATUS_OK = 0,
  MG_STATUS_NULL_POINTER = 1,
  MG_STATUS_DIMENSION = 2,
  MG_STATUS_PARSE = 3,
  MG_STATUS_VALIDATION = 4,
  MG_STATUS_NUMERIC = 5,
  MG_STATUS_IO = 6,
  MG_STATUS_DEGENERATE = 7,
  MG_STATUS_RANGE = 8,
  MG_STATUS_CONFIG = 9,
  MG_STATUS_OTHER = 10,
  MG_STATUS_PANIC = 11,
} MgStatus;

// Opaque trained model with its config.
typedef struct MgCheckpoint MgCheckpoint;

// Opaque body template.
typedef struct MgTemplate MgTemplate;

// Metrics of one evaluation, same fields as the text report.
typedef struct MgReport {
  double mpjpe;
  double pa_mpjpe;
  double pve;
  double pck;
  double pck_threshold;
  double accel_err;
  uint64_t frames;
  uint64_t joints;
} MgReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
uintptr_t mg_last_error_message(char *buf, uintptr_t len);

// Library version as a static NUL-terminated string.
const char *mg_version(void);

// The default 24-joint template. Free with [`mg_template_free`].
//
// # Safety
// `out` must be valid for one pointer write.
enum MgStatus mg_template_default(struct MgTemplate **out);

// Reads a template written in the text template format.
//
// # Safety
// `path` must be a NUL-terminated string; `out` valid for one pointer write.
enum MgStatus mg_template_load(const char *path, struct MgTemplate **out);

// # Safety
// `t` must be null or a pointer returned by this library, freed once.
void mg_template_free(struct MgTemplate *t);

// # Safety
// `t` must be a live template handle.
uintptr_t mg_template_num_joints(const struct MgTemplate *t);

// # Safety
// `t` must be a live template handle.
uintptr_t mg_template_num_vertices(const struct MgTemplate *t);

// Poses the template. `theta` holds 3J axis-angle values, `beta` 10 shape
// coefficients; `out_joints` receives 3J and `out_vertices` 3V values.
//
// # Safety
// All pointers must be valid for the stated lengths.
enum MgStatus mg_forward_kinematics(const struct MgTemplate *t,
                                    const double *theta,
                                    const double *beta,
                                    double *out_joints,
                                    double *out_vertices);

// Rodrigues: axis-angle `w[3]` to a row-major 3×3 rotation `out[9]`.
//
// # Safety
// `w` valid for 3 reads and `out` for 9 writes.
enum MgStatus mg_axis_angle_to_rotmat(const double *w, double *out);

// Root-relative mean joint error of `count` 3D points.
//
// # Safety
// `pred` and `gt` valid for 3·count reads; `out` for one write.
enum MgStatus mg_mpjpe(const double *pred,
                       const double *gt,
                       uintptr_t count,
                       uintptr_t pelvis,
                       double *out);

// Mean joint error after optimal similarity alignment.
//
// # Safety
// `pred` and `gt` valid for 3·count reads; `out` for one write.
enum MgStatus mg_pa_mpjpe(const double *pred, const double *gt, uintptr_t count, double *out);

// Loads a training checkpoint. Free with [`mg_checkpoint_free`].
//
// # Safety
// `path` must be NUL-terminated; `out` valid for one pointer write.
enum MgStatus mg_checkpoint_load(const char *path, struct MgCheckpoint **out);

// # Safety
// `c` must be null or a pointer returned by this library, freed once.
void mg_checkpoint_free(struct MgCheckpoint *c);

// Training steps recorded in the checkpoint.
//
// # Safety
// `c` must be a live checkpoint handle.
uint64_t mg_checkpoint_step(const struct MgCheckpoint *c);

// Evaluates on the eval split of the corpus in `corpus_dir`, or of the
// corpus regenerated from the checkpoint's config when it is null.
//
// # Safety
// `c` must be a live handle, `corpus_dir` null or NUL-terminated, `out`
// valid for one write.
enum MgStatus mg_checkpoint_evaluate(const struct MgCheckpoint *c,
                                     const char *corpus_dir,
                                     struct MgReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTIONGAN_H */
