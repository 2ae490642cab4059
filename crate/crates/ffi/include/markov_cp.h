#ifndef MARKOV_CP_H
#define MARKOV_CP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum McpStatus {
  MCP_STATUS_OK = 0,
  MCP_STATUS_NULL_POINTER = 1,
  MCP_STATUS_INVALID_PARAMETER = 2,
  MCP_STATUS_DOMAIN_ERROR = 3,
  MCP_STATUS_NOT_ERGODIC = 4,
  MCP_STATUS_NOT_REVERSIBLE = 5,
  MCP_STATUS_INSUFFICIENT_DATA = 6,
  MCP_STATUS_INVALID_DATA = 7,
  MCP_STATUS_SINGULAR_FIT = 8,
  MCP_STATUS_PARSE_ERROR = 9,
  MCP_STATUS_CONFIG = 10,
  MCP_STATUS_IO = 11,
  /**
   * A Rust panic was caught at the boundary.
   */
  MCP_STATUS_INTERNAL = 12,
} McpStatus;

/**
 * Conformal method selector for report lookups.
 */
typedef enum McpMethod {
  MCP_METHOD_SPLIT = 0,
  MCP_METHOD_KSPLIT = 1,
  MCP_METHOD_KSPLIT_CORRECTED = 2,
} McpMethod;

/**
 * Finite Markov kernel.
 */
typedef struct McpKernel McpKernel;

/**
 * Linear model with a calibrated conformal half-width.
 */
typedef struct McpPredictor McpPredictor;

/**
 * Coverage experiment report.
 */
typedef struct McpReport McpReport;

/**
 * Per-method report row. Optional fields are NaN when absent.
 */
typedef struct McpMethodStats {
  double coverage_mean;
  double coverage_se;
  double mean_halfwidth;
  double relative_length_error;
  size_t k_used;
  size_t trials;
  size_t infinite_intervals;
} McpMethodStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *mcp_last_error(void);

/**
 * Kernel from `size * size` row-major transition probabilities.
 *
 * # Safety
 * `probs` must point to `size * size` doubles; `out` must be writable.
 */
enum McpStatus mcp_kernel_new(const double *probs, size_t size, struct McpKernel **out);

/**
 * Lazy random walk on the cycle of length `w >= 3`.
 *
 * # Safety
 * `out` must be writable.
 */
enum McpStatus mcp_kernel_lazy_walk(size_t w, struct McpKernel **out);

/**
 * # Safety
 * `kernel` must come from a kernel constructor and not be used afterwards.
 */
void mcp_kernel_free(struct McpKernel *kernel);

/**
 * # Safety
 * `kernel` must be a live handle; `out` must be writable.
 */
enum McpStatus mcp_kernel_size(const struct McpKernel *kernel, size_t *out);

/**
 * Stationary distribution written to `out[0..len]`; `len` must equal the kernel size.
 *
 * # Safety
 * `kernel` must be a live handle; `out` must hold `len` doubles.
 */
enum McpStatus mcp_kernel_stationary(const struct McpKernel *kernel, double *out, size_t len);

/**
 * `t_mix(eps)`: first `t` with worst-row TV distance to stationarity at most `eps`.
 *
 * # Safety
 * `kernel` must be a live handle; `out` must be writable.
 */
enum McpStatus mcp_kernel_mixing_time(const struct McpKernel *kernel, double eps, size_t *out);

/**
 * Second eigenvalue, smallest eigenvalue and rate `max(λ₂, |λ_min|)` of a
 * reversible kernel. Any of the out pointers may be null.
 *
 * # Safety
 * `kernel` must be a live handle; non-null out pointers must be writable.
 */
enum McpStatus mcp_kernel_spectral_gap(const struct McpKernel *kernel,
                                       double *lambda2,
                                       double *lambda_min,
                                       double *rho);

/**
 * Simulate `len` states from a uniform start into `out`.
 *
 * # Safety
 * `kernel` must be a live handle; `out` must hold `len` values.
 */
enum McpStatus mcp_kernel_simulate(const struct McpKernel *kernel,
                                   size_t len,
                                   uint64_t seed,
                                   size_t *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum McpStatus mcp_lambert_w0(double x, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum McpStatus mcp_lambert_wm1(double x, double *out);

/**
 * Optimal thinning step; either out pointer may be null.
 *
 * # Safety
 * Non-null out pointers must be writable.
 */
enum McpStatus mcp_k_star(size_t n, double rho, double *value, size_t *rounded);

/**
 * # Safety
 * `out` must be writable.
 */
enum McpStatus mcp_adaptive_k(size_t n, double rho_hat, size_t *out);

/**
 * # Safety
 * `series` must hold `len` doubles; `out` must be writable.
 */
enum McpStatus mcp_estimate_rho_autocorr(const double *series,
                                         size_t len,
                                         size_t max_lag,
                                         double *out);

/**
 * Conformal quantile of `scores` thinned by `k`; `+inf` when the rank
 * exceeds the thinned sample size. `corrected != 0` selects the corrected rank.
 *
 * # Safety
 * `scores` must hold `len` doubles; `out` must be writable.
 */
enum McpStatus mcp_conformal_quantile(const double *scores,
                                      size_t len,
                                      double alpha,
                                      size_t k,
                                      int corrected,
                                      double *out);

/**
 * Fit `y = a·x + b` on the training pairs and calibrate on every `k`-th
 * calibration pair.
 *
 * # Safety
 * Arrays must hold the stated number of doubles; `out` must be writable.
 */
enum McpStatus mcp_predictor_fit_linear(const double *train_x,
                                        const double *train_y,
                                        size_t n_train,
                                        const double *cal_x,
                                        const double *cal_y,
                                        size_t n_cal,
                                        double alpha,
                                        size_t k,
                                        int corrected,
                                        struct McpPredictor **out);

/**
 * Prediction interval at `x`; infinite bounds denote the whole line.
 *
 * # Safety
 * `predictor` must be a live handle; `lower` and `upper` must be writable.
 */
enum McpStatus mcp_predictor_interval(const struct McpPredictor *predictor,
                                      double x,
                                      double *lower,
                                      double *upper);

/**
 * Calibrated half-width (possibly `+inf`).
 *
 * # Safety
 * `predictor` must be a live handle; `out` must be writable.
 */
enum McpStatus mcp_predictor_halfwidth(const struct McpPredictor *predictor, double *out);

/**
 * # Safety
 * `predictor` must come from [`mcp_predictor_fit_linear`] and not be used afterwards.
 */
void mcp_predictor_free(struct McpPredictor *predictor);

/**
 * Run a coverage experiment described by a JSON config string.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum McpStatus mcp_experiment_run(const char *config_json, struct McpReport **out);

/**
 * Statistics for one method; `InvalidParameter` if the method was not run.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum McpStatus mcp_report_get(const struct McpReport *report,
                              enum McpMethod method,
                              struct McpMethodStats *out);

/**
 * Report as a JSON string owned by the caller; release it with [`mcp_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum McpStatus mcp_report_to_json(const struct McpReport *report, char **out);

/**
 * # Safety
 * `report` must come from [`mcp_experiment_run`] and not be used afterwards.
 */
void mcp_report_free(struct McpReport *report);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void mcp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARKOV_CP_H */
