#ifndef PMM_H
#define PMM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum PmmStatus {
  PMM_STATUS_OK = 0,
  PMM_STATUS_NULL_POINTER = 1,
  PMM_STATUS_INVALID_ARGUMENT = 2,
  PMM_STATUS_NOT_POSITIVE_DEFINITE = 3,
  PMM_STATUS_DIMENSION_MISMATCH = 4,
  PMM_STATUS_SOLVE_FAILED = 5,
  PMM_STATUS_NUMERICAL = 6,
  PMM_STATUS_PANIC = 7,
} PmmStatus;

/**
 * Kind of linear operator applied to one kernel argument.
 */
typedef enum PmmOperatorKind {
  PMM_OPERATOR_KIND_IDENTITY = 0,
  /**
   * `a * (-Laplacian)`
   */
  PMM_OPERATOR_KIND_NEG_LAPLACIAN = 1,
  /**
   * `a * (-Laplacian) + c * Id`
   */
  PMM_OPERATOR_KIND_AFFINE_INTERIOR = 2,
  PMM_OPERATOR_KIND_BOUNDARY_TRACE = 3,
} PmmOperatorKind;

/**
 * Opaque covariance kernel.
 */
typedef struct PmmKernel PmmKernel;

/**
 * Opaque forward posterior of the 1D Poisson problem.
 */
typedef struct PmmPosterior PmmPosterior;

/**
 * Operator descriptor. `a` and `c` are ignored where the kind has none.
 */
typedef struct PmmOperator {
  enum PmmOperatorKind kind;
  double a;
  double c;
} PmmOperator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pmm_last_error_message(void);

/**
 * Squared-exponential kernel with the given length-scale in dimension 1 or 2.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum PmmStatus pmm_kernel_sqexp_new(double lengthscale, size_t dim, struct PmmKernel **out);

/**
 * 1D kernel that satisfies homogeneous Dirichlet conditions, built from a
 * squared-exponential forcing prior.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum PmmStatus pmm_kernel_greens_new(double forcing_lengthscale,
                                     size_t quadrature_nodes,
                                     struct PmmKernel **out);

/**
 * Releases a kernel. NULL is ignored.
 *
 * # Safety
 * `kernel` must be NULL or a handle from a `pmm_kernel_*_new` function that
 * has not been freed.
 */
void pmm_kernel_free(struct PmmKernel *kernel);

/**
 * `left_x right_y k(x, y)` for points given as two coordinates each (the
 * second is ignored in 1D).
 *
 * # Safety
 * `kernel` must be a live handle; `x` and `y` must point to two doubles;
 * `out` must be writable.
 */
enum PmmStatus pmm_kernel_op_eval(const struct PmmKernel *kernel,
                                  struct PmmOperator left,
                                  struct PmmOperator right,
                                  const double *x,
                                  const double *y,
                                  double *out);

/**
 * Forward posterior for `-theta u'' = sin(2 pi x)` on (0, 1) with zero
 * boundary values, from `m` interior design points.
 *
 * # Safety
 * `kernel` must be a live 1D handle; `out` must be writable.
 */
enum PmmStatus pmm_poisson_solve(const struct PmmKernel *kernel,
                                 double theta,
                                 size_t m,
                                 struct PmmPosterior **out);

/**
 * Releases a posterior. NULL is ignored.
 *
 * # Safety
 * `posterior` must be NULL or a live handle from [`pmm_poisson_solve`].
 */
void pmm_posterior_free(struct PmmPosterior *posterior);

/**
 * Posterior mean at `n` points `xs`, written to `out[0..n]`.
 *
 * # Safety
 * `xs` and `out` must hold `n` doubles each.
 */
enum PmmStatus pmm_posterior_mean(const struct PmmPosterior *posterior,
                                  const double *xs,
                                  size_t n,
                                  double *out);

/**
 * Posterior pointwise variance at `n` points `xs`, written to `out[0..n]`.
 *
 * # Safety
 * `xs` and `out` must hold `n` doubles each.
 */
enum PmmStatus pmm_posterior_var(const struct PmmPosterior *posterior,
                                 const double *xs,
                                 size_t n,
                                 double *out);

/**
 * Log-likelihood of data `y` observed at `data_x` with iid noise `sigma`,
 * with the posterior's discretisation covariance added to the noise.
 *
 * # Safety
 * `data_x` and `y` must hold `n` doubles each; `out` must be writable.
 */
enum PmmStatus pmm_pn_loglik(const struct PmmPosterior *posterior,
                             const double *data_x,
                             const double *y,
                             size_t n,
                             double sigma,
                             double *out);

/**
 * Number of distinct steady Allen–Cahn solutions found by deflated Newton
 * on an `n` by `n` interior lattice.
 *
 * # Safety
 * `out` must be writable.
 */
enum PmmStatus pmm_allen_cahn_count(double delta, size_t n, uint64_t seed, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMM_H */
