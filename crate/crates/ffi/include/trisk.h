#ifndef TRISK_H
#define TRISK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TriskStatus {
  TRISK_STATUS_OK = 0,
  TRISK_STATUS_NULL_POINTER = 1,
  TRISK_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The requested minimal T-risk does not exist (unbounded below).
   */
  TRISK_STATUS_UNBOUNDED = 3,
  /**
   * A solver or evaluation failed numerically.
   */
  TRISK_STATUS_NUMERICAL = 4,
  /**
   * An internal panic was caught.
   */
  TRISK_STATUS_PANIC = 5,
} TriskStatus;

/**
 * Scaled Barron dispersion function.
 */
typedef struct TriskDispersion TriskDispersion;

/**
 * Nonempty sample of finite losses.
 */
typedef struct TriskLosses TriskLosses;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code; never null, never freed.
 */
const char *trisk_status_message(enum TriskStatus status);

/**
 * Creates a Barron dispersion with shape `alpha` (`-INFINITY` allowed, at
 * most 2) and scale `sigma > 0`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum TriskStatus trisk_dispersion_new(double alpha, double sigma, struct TriskDispersion **out);

/**
 * Releases a dispersion handle; null is ignored.
 *
 * # Safety
 * `handle` must be null or come from `trisk_dispersion_new`, not yet freed.
 */
void trisk_dispersion_free(struct TriskDispersion *handle);

/**
 * `rho_sigma(x)`.
 *
 * # Safety
 * `handle` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_dispersion_value(const struct TriskDispersion *handle,
                                        double x,
                                        double *out);

/**
 * First derivative of `rho_sigma` at `x`.
 *
 * # Safety
 * `handle` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_dispersion_slope(const struct TriskDispersion *handle,
                                        double x,
                                        double *out);

/**
 * Second derivative of `rho_sigma` at `x`.
 *
 * # Safety
 * `handle` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_dispersion_curvature(const struct TriskDispersion *handle,
                                            double x,
                                            double *out);

/**
 * Lipschitz constant of `rho_sigma` (`INFINITY` when unbounded slope).
 *
 * # Safety
 * `handle` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_dispersion_lipschitz(const struct TriskDispersion *handle, double *out);

/**
 * Smoothness constant `sup |rho_sigma''|`.
 *
 * # Safety
 * `handle` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_dispersion_smoothness(const struct TriskDispersion *handle, double *out);

/**
 * Copies `len` finite losses into a new sample handle.
 *
 * # Safety
 * `values` must be valid for `len` reads (or null with `len == 0`);
 * `out` must be null or valid for writes.
 */
enum TriskStatus trisk_losses_new(const double *values, size_t len, struct TriskLosses **out);

/**
 * Releases a loss sample; null is ignored.
 *
 * # Safety
 * `handle` must be null or come from `trisk_losses_new`, not yet freed.
 */
void trisk_losses_free(struct TriskLosses *handle);

/**
 * Number of losses in the sample (0 for null).
 *
 * # Safety
 * `handle` must be null or a live handle.
 */
size_t trisk_losses_len(const struct TriskLosses *handle);

/**
 * Lower `beta`-quantile of the sample.
 *
 * # Safety
 * `losses` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_quantile(const struct TriskLosses *losses, double beta, double *out);

/**
 * Conditional value-at-risk at level `beta` in `[0, 1)`.
 *
 * # Safety
 * `losses` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_cvar(const struct TriskLosses *losses, double beta, double *out);

/**
 * Tilted (entropic) risk for nonzero `gamma`.
 *
 * # Safety
 * `losses` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_tilted(const struct TriskLosses *losses, double gamma, double *out);

/**
 * Chi-squared DRO risk with radius parameter `a_tilde`.
 *
 * # Safety
 * `losses` must be null or a live handle; `out` null or writable.
 */
enum TriskStatus trisk_dro(const struct TriskLosses *losses, double a_tilde, double *out);

/**
 * T-risk `eta * theta + mean(rho_sigma(L - theta))` at a given threshold.
 *
 * # Safety
 * Handles must be null or live; `out` null or writable.
 */
enum TriskStatus trisk_trisk(const struct TriskLosses *losses,
                             const struct TriskDispersion *dispersion,
                             double theta,
                             double eta,
                             double *out);

/**
 * Minimal T-risk over the threshold and the minimizing threshold.
 *
 * # Safety
 * Handles must be null or live; `value` and `theta_star` null or writable.
 */
enum TriskStatus trisk_minimal_trisk(const struct TriskLosses *losses,
                                     const struct TriskDispersion *dispersion,
                                     double eta,
                                     double *value,
                                     double *theta_star);

/**
 * M-location: the threshold minimizing `mean(rho_sigma(L - theta))`.
 *
 * # Safety
 * Handles must be null or live; `out` null or writable.
 */
enum TriskStatus trisk_m_location(const struct TriskLosses *losses,
                                  const struct TriskDispersion *dispersion,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRISK_H */
