#ifndef BGK_FFI_H
#define BGK_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BgkStatus {
  BGK_STATUS_OK = 0,
  BGK_STATUS_NULL_POINTER = 1,
  BGK_STATUS_DOMAIN = 2,
  BGK_STATUS_CONFIG = 3,
  BGK_STATUS_CFL = 4,
  BGK_STATUS_NON_FINITE = 5,
  BGK_STATUS_PRECONDITION = 6,
  BGK_STATUS_DEGENERATE = 7,
  BGK_STATUS_IO = 8,
  BGK_STATUS_BUFFER_TOO_SMALL = 9,
  BGK_STATUS_PANIC = 10,
} BgkStatus;

/**
 * A flux `A` on `[0, M]`.
 */
typedef struct BgkFlux BgkFlux;

/**
 * A kinetic state with its flux and solver settings.
 */
typedef struct BgkSolver BgkSolver;

/**
 * Outcome of [`bgk_project_column`].
 */
typedef struct BgkProjectionInfo {
  double rho;
  size_t n_steps;
  double v0;
  bool dominated;
  double mass_defect;
} BgkProjectionInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *bgk_last_error(void);

/**
 * Creates a one-component polynomial flux `A(v) = Σ coeffs[k] v^k` on
 * `[0, m_cap]`.
 *
 * # Safety
 * `coeffs` must point to `n_coeffs` readable doubles; `out` must be writable.
 */
enum BgkStatus bgk_flux_new_polynomial(const double *coeffs,
                                       size_t n_coeffs,
                                       double m_cap,
                                       struct BgkFlux **out);

/**
 * # Safety
 * `flux` must come from [`bgk_flux_new_polynomial`] and not be used again.
 */
void bgk_flux_free(struct BgkFlux *flux);

/**
 * Writes `A(v)` and `A'(v)`.
 *
 * # Safety
 * `flux` must be a live handle; `value` and `slope` must be writable.
 */
enum BgkStatus bgk_flux_eval(const struct BgkFlux *flux, double v, double *value, double *slope);

/**
 * Scans `A'` on `[0, min(m_bound, M)]` for flat pieces; `pass` is false
 * when one is found.
 *
 * # Safety
 * `flux` must be a live handle; `pass` must be writable.
 */
enum BgkStatus bgk_flux_check_nondegeneracy(const struct BgkFlux *flux,
                                            double m_bound,
                                            size_t n_samples,
                                            double tol,
                                            bool *pass);

/**
 * Builds a solver from a JSON run configuration and its initial data.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum BgkStatus bgk_solver_new(const char *config_json, struct BgkSolver **out);

/**
 * # Safety
 * `solver` must come from [`bgk_solver_new`] and not be used again.
 */
void bgk_solver_free(struct BgkSolver *solver);

/**
 * One full time step of length `cfl · dx / max|A'|`.
 *
 * # Safety
 * `solver` must be a live handle.
 */
enum BgkStatus bgk_solver_step(struct BgkSolver *solver);

/**
 * Steps until the solver time reaches `t_target`, shortening the last step.
 *
 * # Safety
 * `solver` must be a live handle.
 */
enum BgkStatus bgk_solver_advance(struct BgkSolver *solver, double t_target);

/**
 * # Safety
 * `solver` must be a live handle; `t` must be writable.
 */
enum BgkStatus bgk_solver_time(const struct BgkSolver *solver, double *t);

/**
 * Number of space cells.
 *
 * # Safety
 * `solver` must be a live handle; `nx` must be writable.
 */
enum BgkStatus bgk_solver_nx(const struct BgkSolver *solver, size_t *nx);

/**
 * Copies the density `ρ_i = Σ_j f_ij dv` into `rho`, which holds `len`
 * doubles. Fails with `BufferTooSmall` when `len < nx`.
 *
 * # Safety
 * `solver` must be a live handle; `rho` must point to `len` writable doubles.
 */
enum BgkStatus bgk_solver_density(const struct BgkSolver *solver, double *rho, size_t len);

/**
 * Projects a velocity profile `f` of `nv` cells on `[0, m_cap]` onto the
 * entropy-ladder minimizer with step `eps`, writing `nv` values into `pi`.
 *
 * # Safety
 * `f` must point to `nv` readable doubles, `pi` to `nv` writable doubles,
 * `info` may be null.
 */
enum BgkStatus bgk_project_column(const double *f,
                                  size_t nv,
                                  double m_cap,
                                  double eps,
                                  double *pi,
                                  struct BgkProjectionInfo *info);

/**
 * Entropy solution of Burgers' equation from a single jump at `x0`.
 *
 * # Safety
 * `out` must be writable.
 */
enum BgkStatus bgk_burgers_riemann_exact(double rho_l,
                                         double rho_r,
                                         double x0,
                                         double x,
                                         double t,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BGK_FFI_H */
