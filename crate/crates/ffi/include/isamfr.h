#ifndef ISAMFR_H
#define ISAMFR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsamMethod {
  ISAM_METHOD_IFFT = 0,
  ISAM_METHOD_ISAM = 1,
  ISAM_METHOD_DEFR = 2,
  ISAM_METHOD_DEFR_ISAM = 3,
  ISAM_METHOD_MBIR = 4,
  ISAM_METHOD_MBIR_PLUS = 5,
} IsamMethod;

/**
 * Result codes.
 */
typedef enum IsamStatus {
  ISAM_STATUS_OK = 0,
  ISAM_STATUS_NULL_POINTER = 1,
  ISAM_STATUS_INVALID_ARGUMENT = 2,
  ISAM_STATUS_BUFFER_SIZE = 3,
  ISAM_STATUS_NON_FINITE = 4,
  ISAM_STATUS_EVANESCENT = 5,
  ISAM_STATUS_SOLVER_DIVERGED = 6,
  ISAM_STATUS_PANIC = 7,
} IsamStatus;

/**
 * Dispersion phase polynomial sampled on one grid.
 */
typedef struct IsamDispersion IsamDispersion;

/**
 * Acquisition geometry.
 */
typedef struct IsamGrid IsamGrid;

/**
 * Precomputed forward/adjoint operator for one grid.
 */
typedef struct IsamPlan IsamPlan;

/**
 * Tunables for [`isam_reconstruct`]; start from [`isam_recon_params_default`].
 */
typedef struct IsamReconParams {
  size_t defr_iters;
  double defr_floor;
  /**
   * Nonzero adds the compensated residual to the DEFR image.
   */
  int32_t defr_residual;
  double lambda;
  double tol;
  size_t max_iters;
  /**
   * Nonzero re-adds the back-projected residual to the MBIR output.
   */
  int32_t add_residual;
  double step_scale;
  double epsilon;
  double w_min;
  double w_max;
  /**
   * Nonzero takes the residual from the extrapolated iterate.
   */
  int32_t residual_extrapolated;
} IsamReconParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *isam_version(void);

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *isam_last_error(void);

struct IsamReconParams isam_recon_params_default(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum IsamStatus isam_grid_new(size_t n_x,
                              size_t n_z,
                              double k_min,
                              double k_max,
                              double lateral_pitch,
                              size_t focal_z_index,
                              struct IsamGrid **out);

/**
 * # Safety
 * `grid` must come from [`isam_grid_new`] and not be freed twice. NULL is ignored.
 */
void isam_grid_free(struct IsamGrid *grid);

/**
 * Builds the operator plan. `kernel_width` 0 and `oversampling` 0 select
 * the defaults (6 and 2.0).
 *
 * # Safety
 * `grid` must be a live grid handle and `out` valid for one write.
 */
enum IsamStatus isam_plan_new(const struct IsamGrid *grid,
                              size_t kernel_width,
                              double oversampling,
                              struct IsamPlan **out);

/**
 * # Safety
 * `plan` must come from [`isam_plan_new`] and not be freed twice. NULL is ignored.
 */
void isam_plan_free(struct IsamPlan *plan);

/**
 * Estimated spectral norm of the operator, or NaN for a NULL plan.
 *
 * # Safety
 * `plan` must be NULL or a live plan handle.
 */
double isam_plan_op_norm(const struct IsamPlan *plan);

/**
 * `coeffs` holds `a_2, a_3, …` (at most four); `n_coeffs` may be 0.
 *
 * # Safety
 * `grid` must be a live grid handle, `coeffs` readable for `n_coeffs`
 * doubles (or NULL when `n_coeffs` is 0) and `out` valid for one write.
 */
enum IsamStatus isam_dispersion_new(const struct IsamGrid *grid,
                                    double k_0,
                                    const double *coeffs,
                                    size_t n_coeffs,
                                    struct IsamDispersion **out);

/**
 * # Safety
 * `d` must come from [`isam_dispersion_new`] and not be freed twice. NULL is ignored.
 */
void isam_dispersion_free(struct IsamDispersion *d);

/**
 * `s = K η`, image in, spectra out.
 *
 * # Safety
 * `plan` must be a live handle; `input` readable and `output` writable for
 * the stated lengths, which must both equal `2 * n_x * n_z`.
 */
enum IsamStatus isam_k_forward(const struct IsamPlan *plan,
                               const double *input,
                               size_t input_len,
                               double *output,
                               size_t output_len);

/**
 * `η = K^H s`, spectra in, image out.
 *
 * # Safety
 * As for [`isam_k_forward`].
 */
enum IsamStatus isam_k_adjoint(const struct IsamPlan *plan,
                               const double *input,
                               size_t input_len,
                               double *output,
                               size_t output_len);

/**
 * `s = diag(e^{jφ}) K η`.
 *
 * # Safety
 * As for [`isam_k_forward`]; `d` must be a live handle built on the same grid.
 */
enum IsamStatus isam_khat_forward(const struct IsamPlan *plan,
                                  const struct IsamDispersion *d,
                                  const double *input,
                                  size_t input_len,
                                  double *output,
                                  size_t output_len);

/**
 * `η = K^H diag(e^{-jφ}) s`.
 *
 * # Safety
 * As for [`isam_khat_forward`].
 */
enum IsamStatus isam_khat_adjoint(const struct IsamPlan *plan,
                                  const struct IsamDispersion *d,
                                  const double *input,
                                  size_t input_len,
                                  double *output,
                                  size_t output_len);

/**
 * Reconstructs a complex image from real spectra with one of the six
 * methods. `d` may be NULL for no dispersion and `params` NULL for the
 * defaults. `iterations`, if not NULL, receives the MBIR iteration count
 * (0 for other methods).
 *
 * # Safety
 * Handles must be live; `spectra` readable for `spectra_len = n_x * n_z`
 * doubles; `output` writable for `output_len = 2 * n_x * n_z` doubles.
 */
enum IsamStatus isam_reconstruct(const struct IsamPlan *plan,
                                 const struct IsamDispersion *d,
                                 enum IsamMethod method,
                                 const struct IsamReconParams *params,
                                 const double *spectra,
                                 size_t spectra_len,
                                 double *output,
                                 size_t output_len,
                                 size_t *iterations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAMFR_H */
