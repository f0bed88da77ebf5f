#ifndef MOMHEAT_H
#define MOMHEAT_H

/* Generated by cbindgen from the momheat-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum MhStatus {
  MhStatus_Ok = 0,
  MhStatus_NullPointer = 1,
  MhStatus_InvalidArgument = 2,
  MhStatus_SolverFailure = 3,
  MhStatus_IoError = 4,
  MhStatus_ParseError = 5,
  /**
   * Solve finished but not at the optimal status.
   */
  MhStatus_NotOptimal = 6,
} MhStatus;

/**
 * Kernel family selector for `mh_extract`.
 */
typedef enum MhForm {
  MhForm_General = 0,
  MhForm_Linear = 1,
  MhForm_Semilinear = 2,
} MhForm;

/**
 * Problem instance plus relaxation/solver settings (opaque).
 */
typedef struct MhProblem {
  uint8_t _private[0];
} MhProblem;

/**
 * Pseudo-moment dump of a solved relaxation (opaque).
 */
typedef struct MhMoments {
  uint8_t _private[0];
} MhMoments;

/**
 * A feedback law: extracted kernel controller or LQR gain (opaque).
 */
typedef struct MhController {
  uint8_t _private[0];
} MhController;

/**
 * Closed-loop simulation trace (opaque).
 */
typedef struct MhTrace {
  uint8_t _private[0];
} MhTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread, or NULL.
 */
const char *mh_last_error_message(void);

/**
 * Loads a problem from a TOML configuration file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to receive the handle.
 */
enum MhStatus mh_problem_from_config(const char *path, struct MhProblem **out);

/**
 * Built-in reference instance; `nonlinear = 0` gives the linear variant.
 *
 * # Safety
 * `out` must be a valid pointer to receive the handle.
 */
enum MhStatus mh_problem_reference(int32_t nonlinear,
                                   uint32_t relaxation_degree,
                                   struct MhProblem **out);

/**
 * # Safety
 * `p` must come from a `mh_problem_*` constructor and not be freed twice.
 */
void mh_problem_free(struct MhProblem *p);

/**
 * Assembles and solves the moment relaxation; on success hands back the
 * pseudo-moment dump. Returns `NotOptimal` (with the moments still
 * produced) when the solver stopped away from optimality.
 *
 * # Safety
 * `p` must be a live problem handle; `out` a valid output slot.
 */
enum MhStatus mh_relax(const struct MhProblem *p, struct MhMoments **out);

/**
 * # Safety
 * `m` must be a live moments handle; `out` valid.
 */
enum MhStatus mh_moments_objective(const struct MhMoments *m, double *out);

/**
 * # Safety
 * `m` must be a live moments handle; `out` valid.
 */
enum MhStatus mh_moments_degree(const struct MhMoments *m, uint32_t *out);

/**
 * # Safety
 * `m` live handle, `path` valid NUL-terminated string.
 */
enum MhStatus mh_moments_save(const struct MhMoments *m, const char *path);

/**
 * # Safety
 * `path` valid string, `out` valid output slot.
 */
enum MhStatus mh_moments_load(const char *path, struct MhMoments **out);

/**
 * # Safety
 * Handle from this library, freed once.
 */
void mh_moments_free(struct MhMoments *m);

/**
 * Extracts a feedback controller from pseudo-moments. `r` and `m_r` are
 * read only for the semilinear form.
 *
 * # Safety
 * `m` live handle, `out` valid output slot.
 */
enum MhStatus mh_extract(const struct MhMoments *m,
                         enum MhForm form,
                         uint32_t kernel_degree,
                         uint32_t p,
                         uint32_t r,
                         uint32_t m_r,
                         struct MhController **out);

/**
 * Solves the LQR baseline on a uniform mesh of size `h` and wraps the
 * gain as a controller.
 *
 * # Safety
 * `p` live problem handle, `out` valid output slot.
 */
enum MhStatus mh_lqr(const struct MhProblem *p, double h, struct MhController **out);

/**
 * Number of kernel coefficients (gamma block; LQR gains report their
 * length).
 *
 * # Safety
 * `c` live controller handle, `out` valid.
 */
enum MhStatus mh_controller_coeff_count(const struct MhController *c, uintptr_t *out);

/**
 * Copies the kernel coefficients (gamma then delta, or the LQR gain) into
 * a caller buffer of length `len`.
 *
 * # Safety
 * `buf` must point to at least `len` writable doubles.
 */
enum MhStatus mh_controller_coeffs(const struct MhController *c, double *buf, uintptr_t len);

/**
 * # Safety
 * `c` live handle, `path` valid string.
 */
enum MhStatus mh_controller_save(const struct MhController *c, const char *path);

/**
 * # Safety
 * `path` valid string, `out` valid output slot.
 */
enum MhStatus mh_controller_load(const char *path, struct MhController **out);

/**
 * # Safety
 * Handle from this library, freed once.
 */
void mh_controller_free(struct MhController *c);

/**
 * Runs the closed loop. `controller` may be NULL for the zero control.
 *
 * # Safety
 * Handles must be live; `out` a valid output slot.
 */
enum MhStatus mh_simulate(const struct MhProblem *p,
                          const struct MhController *controller,
                          double h,
                          double dt,
                          double horizon,
                          struct MhTrace **out);

/**
 * # Safety
 * `t` live trace handle, `out` valid.
 */
enum MhStatus mh_trace_cost(const struct MhTrace *t, double *out);

/**
 * Writes 1 to `has_blowup` and the blow-up time to `time` if the run
 * diverged; otherwise writes 0 and leaves `time` untouched.
 *
 * # Safety
 * `t` live trace handle; both out pointers valid.
 */
enum MhStatus mh_trace_blowup(const struct MhTrace *t, int32_t *has_blowup, double *time);

/**
 * Sup norm of the final stored profile.
 *
 * # Safety
 * `t` live trace handle, `out` valid.
 */
enum MhStatus mh_trace_final_sup_norm(const struct MhTrace *t, double *out);

/**
 * Writes the trace as the documented CSV pair.
 *
 * # Safety
 * `t` live trace handle; paths valid NUL-terminated strings.
 */
enum MhStatus mh_trace_write_csv(const struct MhTrace *t,
                                 const char *y_path,
                                 const char *u_path,
                                 uintptr_t stride);

/**
 * # Safety
 * Handle from this library, freed once.
 */
void mh_trace_free(struct MhTrace *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOMHEAT_H */
