#ifndef STOCHFLOW_H
#define STOCHFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StochflowStatus {
  STOCHFLOW_STATUS_OK = 0,
  STOCHFLOW_STATUS_NULL_POINTER = 1,
  STOCHFLOW_STATUS_INVALID_ARGUMENT = 2,
  STOCHFLOW_STATUS_NO_CONVERGENCE = 3,
  STOCHFLOW_STATUS_REMAP_REQUIRED = 4,
  STOCHFLOW_STATUS_NOT_INVERTIBLE = 5,
  STOCHFLOW_STATUS_NUMERICAL = 6,
  STOCHFLOW_STATUS_IO = 7,
  STOCHFLOW_STATUS_PANIC = 8,
  STOCHFLOW_STATUS_OTHER = 9,
} StochflowStatus;

/**
 * Field handle (scalar, vector or matrix valued).
 */
typedef struct StochflowField StochflowField;

/**
 * Periodic grid handle.
 */
typedef struct StochflowGrid StochflowGrid;

/**
 * Time-sliced velocity handle.
 */
typedef struct StochflowHistory StochflowHistory;

/**
 * Solver parameters. `interp` is 0 for Lagrange and 1 for trigonometric
 * interpolation; `windowed` is non-zero to restart the stochastic solver
 * before the displacement leaves its ball.
 */
typedef struct StochflowParams {
  double nu;
  double dt;
  double t_final;
  uint64_t samples;
  uint64_t seed;
  double picard_tol;
  uint32_t picard_max;
  double remap_threshold;
  uint32_t interp;
  uint32_t windowed;
} StochflowParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t stochflow_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *stochflow_version(void);

/**
 * Default solver parameters.
 */
struct StochflowParams stochflow_params_default(void);

/**
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum StochflowStatus stochflow_grid_new(uint32_t dim,
                                        uint32_t n,
                                        double length,
                                        struct StochflowGrid **out);

/**
 * # Safety
 * `grid` must be null or a handle from [`stochflow_grid_new`].
 */
void stochflow_grid_free(struct StochflowGrid *grid);

/**
 * Number of values of a field of `rank` on `grid` (`nodes · dim^rank`).
 *
 * # Safety
 * `grid` must be a valid handle.
 */
size_t stochflow_grid_values(const struct StochflowGrid *grid, uint32_t rank);

/**
 * Builds a field from node-major interleaved values.
 *
 * # Safety
 * `values` must point to `len` doubles; `grid` and `out` must be valid.
 */
enum StochflowStatus stochflow_field_from_values(const struct StochflowGrid *grid,
                                                 uint32_t rank,
                                                 const double *values,
                                                 size_t len,
                                                 struct StochflowField **out);

/**
 * Writes node-major interleaved values into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum StochflowStatus stochflow_field_values(const struct StochflowField *field,
                                            double *buf,
                                            size_t len);

/**
 * # Safety
 * `field` must be null or a field handle.
 */
void stochflow_field_free(struct StochflowField *field);

/**
 * Taylor-Green vortex of the given amplitude (2D, length 2π).
 *
 * # Safety
 * `grid` and `out` must be valid.
 */
enum StochflowStatus stochflow_taylor_green(const struct StochflowGrid *grid,
                                            double amplitude,
                                            struct StochflowField **out);

/**
 * Shear mode `(sin(2πk y / L), 0, ...)`.
 *
 * # Safety
 * `grid` and `out` must be valid.
 */
enum StochflowStatus stochflow_shear_mode(const struct StochflowGrid *grid,
                                          int64_t k,
                                          struct StochflowField **out);

/**
 * Leray projection of a vector field.
 *
 * # Safety
 * `field` and `out` must be valid.
 */
enum StochflowStatus stochflow_leray_project(const struct StochflowField *field,
                                             struct StochflowField **out);

/**
 * Saves a field as a snapshot file.
 *
 * # Safety
 * `field` must be valid and `path` a NUL-terminated string.
 */
enum StochflowStatus stochflow_field_save(const struct StochflowField *field,
                                          double time,
                                          const char *path);

/**
 * Loads a snapshot file; its time is written to `time` when non-null.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid.
 */
enum StochflowStatus stochflow_field_load(const char *path,
                                          double *time,
                                          struct StochflowField **out);

/**
 * Monte-Carlo Picard solve of the stochastic Lagrangian system.
 *
 * # Safety
 * All pointers must be valid.
 */
enum StochflowStatus stochflow_solve_stochastic(const struct StochflowField *u0,
                                                const struct StochflowParams *params,
                                                struct StochflowHistory **out);

/**
 * Deterministic diffusive-Lagrangian solve (`samples`, `seed`, `interp`
 * and `windowed` are ignored).
 *
 * # Safety
 * All pointers must be valid.
 */
enum StochflowStatus stochflow_solve_diffusive(const struct StochflowField *u0,
                                               const struct StochflowParams *params,
                                               struct StochflowHistory **out);

/**
 * Pseudo-spectral Navier-Stokes reference solve (only `nu`, `dt` and
 * `t_final` are used).
 *
 * # Safety
 * All pointers must be valid.
 */
enum StochflowStatus stochflow_solve_reference(const struct StochflowField *u0,
                                               const struct StochflowParams *params,
                                               struct StochflowHistory **out);

/**
 * Number of stored slices (steps + 1).
 *
 * # Safety
 * `h` must be null or a valid handle.
 */
size_t stochflow_history_len(const struct StochflowHistory *h);

/**
 * Time of slice `k`, NaN when out of range.
 *
 * # Safety
 * `h` must be null or a valid handle.
 */
double stochflow_history_time(const struct StochflowHistory *h, size_t k);

/**
 * Copy of slice `k` as a new field handle.
 *
 * # Safety
 * `h` and `out` must be valid.
 */
enum StochflowStatus stochflow_history_slice(const struct StochflowHistory *h,
                                             size_t k,
                                             struct StochflowField **out);

/**
 * # Safety
 * `h` must be null or a history handle.
 */
void stochflow_history_free(struct StochflowHistory *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOCHFLOW_H */
