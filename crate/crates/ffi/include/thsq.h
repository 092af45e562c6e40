#ifndef THSQ_H
#define THSQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ThsqStatus {
  THSQ_STATUS_OK = 0,
  THSQ_STATUS_NULL_POINTER = 1,
  THSQ_STATUS_INVALID_ARGUMENT = 2,
  THSQ_STATUS_PARSE_ERROR = 3,
  THSQ_STATUS_VALIDATION_ERROR = 4,
  THSQ_STATUS_IO_ERROR = 5,
  THSQ_STATUS_NUMERICAL_ERROR = 6,
  THSQ_STATUS_PANIC = 7,
} ThsqStatus;

/**
 * Result of a scenario run.
 */
typedef struct ThsqReport ThsqReport;

/**
 * Parsed scenario.
 */
typedef struct ThsqScenario ThsqScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *thsq_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into the library from the same thread.
 */
const char *thsq_last_error(void);

/**
 * Parses a TOML scenario.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ThsqStatus thsq_scenario_parse(const char *toml, uint64_t seed, struct ThsqScenario **out);

/**
 * # Safety
 * `scenario` must come from [`thsq_scenario_parse`] and not be used afterwards.
 */
void thsq_scenario_free(struct ThsqScenario *scenario);

/**
 * Hilbert-space dimension of the scenario, or 0 for NULL.
 *
 * # Safety
 * `scenario` must be NULL or a live handle.
 */
size_t thsq_scenario_dim(const struct ThsqScenario *scenario);

/**
 * Runs a scenario, writing its files into `out_dir`.
 *
 * # Safety
 * `scenario` must be a live handle, `out_dir` a NUL-terminated path and
 * `out` a valid pointer.
 */
enum ThsqStatus thsq_scenario_run(const struct ThsqScenario *scenario,
                                  const char *out_dir,
                                  struct ThsqReport **out);

/**
 * # Safety
 * `report` must come from [`thsq_scenario_run`] and not be used afterwards.
 */
void thsq_report_free(struct ThsqReport *report);

/**
 * Looks up a named value of the report, such as `norm_drift` or `fidelity`.
 *
 * # Safety
 * `report` must be a live handle, `key` NUL-terminated, `out` valid.
 */
enum ThsqStatus thsq_report_value(const struct ThsqReport *report, const char *key, double *out);

/**
 * Copies the summary line into `buf` (truncated, always NUL-terminated when
 * `len > 0`) and returns the length needed including the terminator.
 *
 * # Safety
 * `report` must be a live handle; `buf` must hold `len` bytes or be NULL.
 */
size_t thsq_report_summary(const struct ThsqReport *report, char *buf, size_t len);

/**
 * Metric `Θ = Σ κₖ lₖlₖ†` of the `n×n` operator `h`. `weights` holds `n`
 * positive values or is NULL for unit weights. Writes `2n²` doubles.
 *
 * # Safety
 * `h` must hold `2n²` doubles, `weights` NULL or `n` doubles,
 * `theta_out` room for `2n²` doubles.
 */
enum ThsqStatus thsq_solve_metric(const double *h,
                                  size_t n,
                                  const double *weights,
                                  double *theta_out);

/**
 * `‖h†Θ − Θh‖_F`.
 *
 * # Safety
 * `h` and `theta` must each hold `2n²` doubles; `out` must be valid.
 */
enum ThsqStatus thsq_dieudonne_residual(const double *h,
                                        const double *theta,
                                        size_t n,
                                        double *out);

/**
 * Dimension of the real Lie algebra generated by `{−i·opₖ}` for `count`
 * consecutive `n×n` matrices in `ops`.
 *
 * # Safety
 * `ops` must hold `count·2n²` doubles; `out` must be valid.
 */
enum ThsqStatus thsq_lie_rank(const double *ops, size_t count, size_t n, size_t *out);

/**
 * `|⟨⟨φ|ψ⟩|² / (⟨⟨φ|φ⟩⟨⟨ψ|ψ⟩)` under the metric `theta`.
 *
 * # Safety
 * `psi` and `target` must hold `2n` doubles, `theta` `2n²`; `out` valid.
 */
enum ThsqStatus thsq_fidelity(const double *psi,
                              const double *target,
                              const double *theta,
                              size_t n,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THSQ_H */
