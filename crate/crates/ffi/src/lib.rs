//! C ABI for the heraldsim toolkit.
//!
//! Scalar predictors are plain functions; simulations go through opaque
//! handles (`HsExperiment`, `HsRun`) created from scenario TOML text or a
//! bundled preset name. Every fallible call returns an [`HsStatus`]; the
//! message for the most recent failure on the current thread is available
//! from [`hs_last_error`].

use heraldsim::config::{self, RunOutput, Scenario};
use heraldsim::error::Error;
use heraldsim::qfc::{self, LinkBudget, QfcParams};
use heraldsim::stats;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result of a fallible call. Mirrors the CLI exit codes for config and
/// numerical failures.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    ConfigError = 2,
    NumericalError = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

/// Opaque experiment description (a parsed scenario).
pub struct HsExperiment {
    _private: [u8; 0],
    _marker: core::marker::PhantomData<(*mut u8, core::marker::PhantomPinned)>,
}

/// Opaque result of one experiment execution (all sweep points).
pub struct HsRun {
    _private: [u8; 0],
    _marker: core::marker::PhantomData<(*mut u8, core::marker::PhantomPinned)>,
}

struct ExperimentInner {
    scenario: Scenario,
}

struct RunInner {
    points: Vec<RunOutput>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> HsStatus {
    match err.exit_code() {
        2 => HsStatus::ConfigError,
        _ => HsStatus::NumericalError,
    }
}

fn guard<F: FnOnce() -> HsStatus>(f: F) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            HsStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

fn write_out(out: *mut f64, value: f64) -> HsStatus {
    if out.is_null() {
        set_error("null output pointer");
        return HsStatus::NullPointer;
    }
    unsafe { *out = value };
    HsStatus::Ok
}

fn scalar(out: *mut f64, result: Result<f64, Error>) -> HsStatus {
    match result {
        Ok(v) => write_out(out, v),
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Thermal probability mass mu^n / (1+mu)^(n+1).
#[no_mangle]
pub extern "C" fn hs_thermal_pmf(mu: f64, n: u32, out: *mut f64) -> HsStatus {
    guard(|| scalar(out, stats::thermal_pmf(mu, n)))
}

/// Ideal cross-correlation 2 + 1/mu of the pair source.
#[no_mangle]
pub extern "C" fn hs_g2_cross_ideal(mu: f64, out: *mut f64) -> HsStatus {
    guard(|| scalar(out, stats::g2_cross_ideal(mu)))
}

/// Ideal thermal autocorrelation (exactly 2).
#[no_mangle]
pub extern "C" fn hs_g2_auto_ideal() -> f64 {
    stats::g2_auto_ideal()
}

/// Cross-correlation surviving conversion at the given conditional SNR.
#[no_mangle]
pub extern "C" fn hs_predict_g2_after_conversion(g2_in: f64, snr: f64, out: *mut f64) -> HsStatus {
    guard(|| scalar(out, stats::predict_g2_after_conversion(g2_in, snr)))
}

/// Device efficiency eta_max sin^2(L sqrt(P eta_n)).
#[no_mangle]
pub extern "C" fn hs_device_efficiency(
    eta_max: f64,
    eta_n_per_w_cm2: f64,
    length_cm: f64,
    pump_power_w: f64,
    out: *mut f64,
) -> HsStatus {
    guard(|| {
        let params = QfcParams {
            eta_max,
            eta_n: eta_n_per_w_cm2,
            length_cm,
            pump_power_w,
            delta_n: 0.0,
            dc_prob: 0.0,
            det_eta_1552: 1.0,
            filter_eta: 1.0,
        };
        if let Err(e) = params.validate() {
            set_error(&e.to_string());
            return status_of(&e);
        }
        write_out(out, qfc::device_efficiency(&params))
    })
}

/// Conditional SNR s / (n + dc) for `mu_in` photons per gate at the input.
#[no_mangle]
pub extern "C" fn hs_snr_predict(
    eta_max: f64,
    eta_n_per_w_cm2: f64,
    length_cm: f64,
    pump_power_w: f64,
    delta_n_per_w: f64,
    dc_prob: f64,
    det_eta: f64,
    mu_in: f64,
    out: *mut f64,
) -> HsStatus {
    guard(|| {
        let params = QfcParams {
            eta_max,
            eta_n: eta_n_per_w_cm2,
            length_cm,
            pump_power_w,
            delta_n: delta_n_per_w,
            dc_prob,
            det_eta_1552: det_eta,
            filter_eta: 1.0,
        };
        if let Err(e) = params.validate() {
            set_error(&e.to_string());
            return status_of(&e);
        }
        scalar(out, qfc::snr_predict(&params, mu_in))
    })
}

/// Fiber length in km beyond which conversion wins over direct transmission.
#[no_mangle]
pub extern "C" fn hs_crossover_distance_km(
    device_eta: f64,
    loss_780_db_per_km: f64,
    loss_1552_db_per_km: f64,
    out: *mut f64,
) -> HsStatus {
    guard(|| {
        let budget = LinkBudget {
            loss_780_db_per_km,
            loss_1552_db_per_km,
            device_eta,
        };
        scalar(out, qfc::crossover_distance(&budget))
    })
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, HsStatus> {
    if ptr.is_null() {
        set_error("null string pointer");
        return Err(HsStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        HsStatus::InvalidUtf8
    })
}

fn experiment_from(scenario: Result<Scenario, Error>) -> *mut HsExperiment {
    match scenario {
        Ok(scenario) => {
            Box::into_raw(Box::new(ExperimentInner { scenario })) as *mut HsExperiment
        }
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Parse scenario TOML into an experiment handle. Returns null on error;
/// see [`hs_last_error`].
///
/// # Safety
/// `toml_utf8` must be a valid NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn hs_experiment_from_toml(toml_utf8: *const c_char) -> *mut HsExperiment {
    match catch_unwind(AssertUnwindSafe(|| match read_utf8(toml_utf8) {
        Ok(text) => experiment_from(config::parse_scenario(text)),
        Err(_) => ptr::null_mut(),
    })) {
        Ok(p) => p,
        Err(_) => {
            set_error("internal panic");
            ptr::null_mut()
        }
    }
}

/// Load a bundled preset by name. Returns null on error.
///
/// # Safety
/// `name_utf8` must be a valid NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn hs_experiment_preset(name_utf8: *const c_char) -> *mut HsExperiment {
    match catch_unwind(AssertUnwindSafe(|| match read_utf8(name_utf8) {
        Ok(name) => experiment_from(config::load_preset(name)),
        Err(_) => ptr::null_mut(),
    })) {
        Ok(p) => p,
        Err(_) => {
            set_error("internal panic");
            ptr::null_mut()
        }
    }
}

unsafe fn experiment_mut<'a>(handle: *mut HsExperiment) -> Result<&'a mut ExperimentInner, HsStatus> {
    if handle.is_null() {
        set_error("null experiment handle");
        return Err(HsStatus::NullPointer);
    }
    Ok(&mut *(handle as *mut ExperimentInner))
}

/// Override the scenario seed.
///
/// # Safety
/// `handle` must come from `hs_experiment_from_toml`/`hs_experiment_preset`.
#[no_mangle]
pub unsafe extern "C" fn hs_experiment_set_seed(handle: *mut HsExperiment, seed: u64) -> HsStatus {
    guard(|| match experiment_mut(handle) {
        Ok(inner) => {
            inner.scenario.seed = seed;
            HsStatus::Ok
        }
        Err(s) => s,
    })
}

/// Override the scenario cycle count.
///
/// # Safety
/// `handle` must come from `hs_experiment_from_toml`/`hs_experiment_preset`.
#[no_mangle]
pub unsafe extern "C" fn hs_experiment_set_cycles(
    handle: *mut HsExperiment,
    n_cycles: u64,
) -> HsStatus {
    guard(|| match experiment_mut(handle) {
        Ok(inner) => {
            inner.scenario.n_cycles = n_cycles;
            HsStatus::Ok
        }
        Err(s) => s,
    })
}

/// Execute the experiment (all sweep points) into a run handle.
///
/// # Safety
/// `handle` must be a live experiment handle and `out_run` non-null.
#[no_mangle]
pub unsafe extern "C" fn hs_experiment_run(
    handle: *mut HsExperiment,
    out_run: *mut *mut HsRun,
) -> HsStatus {
    guard(|| {
        if out_run.is_null() {
            set_error("null output pointer");
            return HsStatus::NullPointer;
        }
        let inner = match experiment_mut(handle) {
            Ok(i) => i,
            Err(s) => return s,
        };
        match config::execute_scenario(&inner.scenario) {
            Ok(points) => {
                let run = Box::into_raw(Box::new(RunInner { points })) as *mut HsRun;
                *out_run = run;
                HsStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

unsafe fn run_point<'a>(handle: *const HsRun, point: u64) -> Result<&'a RunOutput, HsStatus> {
    if handle.is_null() {
        set_error("null run handle");
        return Err(HsStatus::NullPointer);
    }
    let inner = &*(handle as *const RunInner);
    inner.points.get(point as usize).ok_or_else(|| {
        set_error(&format!(
            "point index {point} out of range ({} points)",
            inner.points.len()
        ));
        HsStatus::ConfigError
    })
}

/// Number of executed sweep points.
///
/// # Safety
/// `handle` must be a live run handle or null.
#[no_mangle]
pub unsafe extern "C" fn hs_run_point_count(handle: *const HsRun) -> u64 {
    if handle.is_null() {
        return 0;
    }
    (*(handle as *const RunInner)).points.len() as u64
}

/// Cross-correlation estimate and its standard error for one point.
///
/// # Safety
/// `handle` must be a live run handle; output pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn hs_run_g2(
    handle: *const HsRun,
    point: u64,
    out_value: *mut f64,
    out_sigma: *mut f64,
) -> HsStatus {
    guard(|| match run_point(handle, point) {
        Ok(p) => {
            if !out_value.is_null() {
                *out_value = p.summary.g2;
            }
            if !out_sigma.is_null() {
                *out_sigma = p.summary.g2_sigma;
            }
            HsStatus::Ok
        }
        Err(s) => s,
    })
}

/// Raw tag and coincidence counts for one point.
///
/// # Safety
/// `handle` must be a live run handle; output pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn hs_run_counts(
    handle: *const HsRun,
    point: u64,
    out_heralds: *mut u64,
    out_retrieved: *mut u64,
    out_coincidences: *mut u64,
) -> HsStatus {
    guard(|| match run_point(handle, point) {
        Ok(p) => {
            if !out_heralds.is_null() {
                *out_heralds = p.a.tags.len() as u64;
            }
            if !out_retrieved.is_null() {
                *out_retrieved = p.b.tags.len() as u64;
            }
            if !out_coincidences.is_null() {
                *out_coincidences =
                    (p.summary.p_coinc * p.summary.n_trials as f64).round() as u64;
            }
            HsStatus::Ok
        }
        Err(s) => s,
    })
}

/// Detected singles probabilities per trial for one point.
///
/// # Safety
/// `handle` must be a live run handle; output pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn hs_run_singles(
    handle: *const HsRun,
    point: u64,
    out_p_a: *mut f64,
    out_p_b: *mut f64,
) -> HsStatus {
    guard(|| match run_point(handle, point) {
        Ok(p) => {
            if !out_p_a.is_null() {
                *out_p_a = p.summary.p_a;
            }
            if !out_p_b.is_null() {
                *out_p_b = p.summary.p_b;
            }
            HsStatus::Ok
        }
        Err(s) => s,
    })
}

/// Measured retrieval efficiency for one point (NaN for splitter runs).
///
/// # Safety
/// `handle` must be a live run handle and `out` non-null.
#[no_mangle]
pub unsafe extern "C" fn hs_run_retrieval_efficiency(
    handle: *const HsRun,
    point: u64,
    out: *mut f64,
) -> HsStatus {
    guard(|| match run_point(handle, point) {
        Ok(p) => write_out(out, p.summary.eta_r),
        Err(s) => s,
    })
}

/// Release a run handle. Null is ignored.
///
/// # Safety
/// `handle` must be a live run handle or null; it must not be used after.
#[no_mangle]
pub unsafe extern "C" fn hs_run_free(handle: *mut HsRun) {
    if !handle.is_null() {
        drop(Box::from_raw(handle as *mut RunInner));
    }
}

/// Release an experiment handle. Null is ignored.
///
/// # Safety
/// `handle` must be a live experiment handle or null; it must not be used after.
#[no_mangle]
pub unsafe extern "C" fn hs_experiment_free(handle: *mut HsExperiment) {
    if !handle.is_null() {
        drop(Box::from_raw(handle as *mut ExperimentInner));
    }
}
