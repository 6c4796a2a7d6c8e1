#ifndef HERALDSIM_H
#define HERALDSIM_H

/* Generated by cbindgen from heraldsim-ffi; do not edit by hand. */

#include <stdint.h>
#include <stddef.h>

/**
 * Result of a fallible call. Mirrors the CLI exit codes for config and
 * numerical failures.
 */
typedef enum {
  HS_STATUS_OK = 0,
  HS_STATUS_CONFIG_ERROR = 2,
  HS_STATUS_NUMERICAL_ERROR = 3,
  HS_STATUS_NULL_POINTER = 4,
  HS_STATUS_INVALID_UTF8 = 5,
  HS_STATUS_PANIC = 6,
} HsStatus;

/**
 * Opaque experiment description (a parsed scenario).
 */
typedef struct HsExperiment HsExperiment;

/**
 * Opaque result of one experiment execution (all sweep points).
 */
typedef struct HsRun HsRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *hs_last_error(void);

/**
 * Thermal probability mass mu^n / (1+mu)^(n+1).
 */
HsStatus hs_thermal_pmf(double mu, uint32_t n, double *out);

/**
 * Ideal cross-correlation 2 + 1/mu of the pair source.
 */
HsStatus hs_g2_cross_ideal(double mu, double *out);

/**
 * Ideal thermal autocorrelation (exactly 2).
 */
double hs_g2_auto_ideal(void);

/**
 * Cross-correlation surviving conversion at the given conditional SNR.
 */
HsStatus hs_predict_g2_after_conversion(double g2_in, double snr, double *out);

/**
 * Device efficiency eta_max sin^2(L sqrt(P eta_n)).
 */
HsStatus hs_device_efficiency(double eta_max,
                              double eta_n_per_w_cm2,
                              double length_cm,
                              double pump_power_w,
                              double *out);

/**
 * Conditional SNR s / (n + dc) for `mu_in` photons per gate at the input.
 */
HsStatus hs_snr_predict(double eta_max,
                        double eta_n_per_w_cm2,
                        double length_cm,
                        double pump_power_w,
                        double delta_n_per_w,
                        double dc_prob,
                        double det_eta,
                        double mu_in,
                        double *out);

/**
 * Fiber length in km beyond which conversion wins over direct transmission.
 */
HsStatus hs_crossover_distance_km(double device_eta,
                                  double loss_780_db_per_km,
                                  double loss_1552_db_per_km,
                                  double *out);

/**
 * Parse scenario TOML into an experiment handle. Returns null on error;
 * see [`hs_last_error`].
 *
 * # Safety
 * `toml_utf8` must be a valid NUL-terminated string or null.
 */
HsExperiment *hs_experiment_from_toml(const char *toml_utf8);

/**
 * Load a bundled preset by name. Returns null on error.
 *
 * # Safety
 * `name_utf8` must be a valid NUL-terminated string or null.
 */
HsExperiment *hs_experiment_preset(const char *name_utf8);

/**
 * Override the scenario seed.
 *
 * # Safety
 * `handle` must come from `hs_experiment_from_toml`/`hs_experiment_preset`.
 */
HsStatus hs_experiment_set_seed(HsExperiment *handle, uint64_t seed);

/**
 * Override the scenario cycle count.
 *
 * # Safety
 * `handle` must come from `hs_experiment_from_toml`/`hs_experiment_preset`.
 */
HsStatus hs_experiment_set_cycles(HsExperiment *handle, uint64_t n_cycles);

/**
 * Execute the experiment (all sweep points) into a run handle.
 *
 * # Safety
 * `handle` must be a live experiment handle and `out_run` non-null.
 */
HsStatus hs_experiment_run(HsExperiment *handle, HsRun **out_run);

/**
 * Number of executed sweep points.
 *
 * # Safety
 * `handle` must be a live run handle or null.
 */
uint64_t hs_run_point_count(const HsRun *handle);

/**
 * Cross-correlation estimate and its standard error for one point.
 *
 * # Safety
 * `handle` must be a live run handle; output pointers may be null to skip.
 */
HsStatus hs_run_g2(const HsRun *handle, uint64_t point, double *out_value, double *out_sigma);

/**
 * Raw tag and coincidence counts for one point.
 *
 * # Safety
 * `handle` must be a live run handle; output pointers may be null to skip.
 */
HsStatus hs_run_counts(const HsRun *handle,
                       uint64_t point,
                       uint64_t *out_heralds,
                       uint64_t *out_retrieved,
                       uint64_t *out_coincidences);

/**
 * Detected singles probabilities per trial for one point.
 *
 * # Safety
 * `handle` must be a live run handle; output pointers may be null to skip.
 */
HsStatus hs_run_singles(const HsRun *handle, uint64_t point, double *out_p_a, double *out_p_b);

/**
 * Measured retrieval efficiency for one point (NaN for splitter runs).
 *
 * # Safety
 * `handle` must be a live run handle and `out` non-null.
 */
HsStatus hs_run_retrieval_efficiency(const HsRun *handle, uint64_t point, double *out);

/**
 * Release a run handle. Null is ignored.
 *
 * # Safety
 * `handle` must be a live run handle or null; it must not be used after.
 */
void hs_run_free(HsRun *handle);

/**
 * Release an experiment handle. Null is ignored.
 *
 * # Safety
 * `handle` must be a live experiment handle or null; it must not be used after.
 */
void hs_experiment_free(HsExperiment *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HERALDSIM_H */
