//! C ABI over `markov_cp`.
//!
//! Every function returns an [`McpStatus`]; results come back through out
//! pointers. On failure the message is available from [`mcp_last_error`]
//! until the next call on the same thread. Handles are opaque and must be
//! released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use markov_cp::chains::{mixing_time, simulate_finite, spectral_gap_exact, stationary_distribution, Distribution, FiniteKernel};
use markov_cp::conformal::{calibrate_scores, residual_scores, ConformalPredictor, RankRule};
use markov_cp::estimation::{adaptive_k, estimate_rho_autocorr};
use markov_cp::harness::{fit_linear, run_coverage_experiment, CoverageReport, ExperimentConfig, LinearModel, Method};
use markov_cp::theory::{k_star, lambert_w0, lambert_wm1};
use markov_cp::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DomainError = 3,
    NotErgodic = 4,
    NotReversible = 5,
    InsufficientData = 6,
    InvalidData = 7,
    SingularFit = 8,
    ParseError = 9,
    Config = 10,
    Io = 11,
    /// A Rust panic was caught at the boundary.
    Internal = 12,
}

/// Conformal method selector for report lookups.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McpMethod {
    Split = 0,
    Ksplit = 1,
    KsplitCorrected = 2,
}

impl From<McpMethod> for Method {
    fn from(m: McpMethod) -> Self {
        match m {
            McpMethod::Split => Method::Split,
            McpMethod::Ksplit => Method::Ksplit,
            McpMethod::KsplitCorrected => Method::KsplitCorrected,
        }
    }
}

/// Per-method report row. Optional fields are NaN when absent.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct McpMethodStats {
    pub coverage_mean: f64,
    pub coverage_se: f64,
    pub mean_halfwidth: f64,
    pub relative_length_error: f64,
    pub k_used: usize,
    pub trials: usize,
    pub infinite_intervals: usize,
}

/// Finite Markov kernel.
pub struct McpKernel {
    inner: FiniteKernel,
}

/// Linear model with a calibrated conformal half-width.
pub struct McpPredictor {
    inner: ConformalPredictor<LinearModel>,
}

/// Coverage experiment report.
pub struct McpReport {
    inner: CoverageReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> McpStatus {
    match e {
        Error::InvalidParameter(_) => McpStatus::InvalidParameter,
        Error::NotErgodic(_) => McpStatus::NotErgodic,
        Error::NotReversible { .. } => McpStatus::NotReversible,
        Error::DomainError(_) => McpStatus::DomainError,
        Error::InsufficientData(_) => McpStatus::InsufficientData,
        Error::InvalidData(_) => McpStatus::InvalidData,
        Error::SingularFit(_) => McpStatus::SingularFit,
        Error::BadHeader { .. } | Error::ParseError { .. } | Error::UnsupportedFormat(_) => McpStatus::ParseError,
        Error::Config(_) => McpStatus::Config,
        Error::Io(_) => McpStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Run `f`, translating errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> McpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McpStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed for `{name}`"));
            McpStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            McpStatus::InvalidParameter
        }
        Err(_) => {
            set_error("internal panic".into());
            McpStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Null(name))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null only when `len` is 0, and otherwise point to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must point to `len` writable values when `len > 0`.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    non_null(p, name)?;
    p.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    non_null(p, name)?;
    Ok(&*p)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mcp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Kernel from `size * size` row-major transition probabilities.
///
/// # Safety
/// `probs` must point to `size * size` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_kernel_new(probs: *const f64, size: usize, out: *mut *mut McpKernel) -> McpStatus {
    guard(|| {
        let len = size.checked_mul(size).ok_or_else(|| Failure::Arg("size overflows".into()))?;
        let data = slice(probs, len, "probs")?;
        let rows: Vec<Vec<f64>> = data.chunks(size.max(1)).map(<[f64]>::to_vec).collect();
        let inner = FiniteKernel::new(&rows)?;
        write(out, Box::into_raw(Box::new(McpKernel { inner })), "out")
    })
}

/// Lazy random walk on the cycle of length `w >= 3`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_kernel_lazy_walk(w: usize, out: *mut *mut McpKernel) -> McpStatus {
    guard(|| {
        let inner = FiniteKernel::lazy_walk(w)?;
        write(out, Box::into_raw(Box::new(McpKernel { inner })), "out")
    })
}

/// # Safety
/// `kernel` must come from a kernel constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcp_kernel_free(kernel: *mut McpKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// # Safety
/// `kernel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_kernel_size(kernel: *const McpKernel, out: *mut usize) -> McpStatus {
    guard(|| write(out, handle(kernel, "kernel")?.inner.size(), "out"))
}

/// Stationary distribution written to `out[0..len]`; `len` must equal the kernel size.
///
/// # Safety
/// `kernel` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mcp_kernel_stationary(kernel: *const McpKernel, out: *mut f64, len: usize) -> McpStatus {
    guard(|| {
        let k = &handle(kernel, "kernel")?.inner;
        if len != k.size() {
            return Err(Failure::Arg(format!("buffer holds {len} values, kernel has {} states", k.size())));
        }
        let pi = stationary_distribution(k)?;
        slice_mut(out, len, "out")?.copy_from_slice(pi.as_slice());
        Ok(())
    })
}

/// `t_mix(eps)`: first `t` with worst-row TV distance to stationarity at most `eps`.
///
/// # Safety
/// `kernel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_kernel_mixing_time(kernel: *const McpKernel, eps: f64, out: *mut usize) -> McpStatus {
    guard(|| write(out, mixing_time(&handle(kernel, "kernel")?.inner, eps)?, "out"))
}

/// Second eigenvalue, smallest eigenvalue and rate `max(λ₂, |λ_min|)` of a
/// reversible kernel. Any of the out pointers may be null.
///
/// # Safety
/// `kernel` must be a live handle; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_kernel_spectral_gap(
    kernel: *const McpKernel,
    lambda2: *mut f64,
    lambda_min: *mut f64,
    rho: *mut f64,
) -> McpStatus {
    guard(|| {
        let k = &handle(kernel, "kernel")?.inner;
        let g = spectral_gap_exact(k, &stationary_distribution(k)?)?;
        for (p, v) in [(lambda2, g.lambda2), (lambda_min, g.lambda_min), (rho, g.rho)] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Simulate `len` states from a uniform start into `out`.
///
/// # Safety
/// `kernel` must be a live handle; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mcp_kernel_simulate(kernel: *const McpKernel, len: usize, seed: u64, out: *mut usize) -> McpStatus {
    guard(|| {
        let k = &handle(kernel, "kernel")?.inner;
        let states = simulate_finite(k, &Distribution::uniform(k.size())?, len, seed)?;
        slice_mut(out, len, "out")?.copy_from_slice(&states);
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_lambert_w0(x: f64, out: *mut f64) -> McpStatus {
    guard(|| write(out, lambert_w0(x)?, "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_lambert_wm1(x: f64, out: *mut f64) -> McpStatus {
    guard(|| write(out, lambert_wm1(x)?, "out"))
}

/// Optimal thinning step; either out pointer may be null.
///
/// # Safety
/// Non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_k_star(n: usize, rho: f64, value: *mut f64, rounded: *mut usize) -> McpStatus {
    guard(|| {
        let k = k_star(n, rho)?;
        if !value.is_null() {
            value.write(k.value);
        }
        if !rounded.is_null() {
            rounded.write(k.rounded);
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_adaptive_k(n: usize, rho_hat: f64, out: *mut usize) -> McpStatus {
    guard(|| write(out, adaptive_k(n, rho_hat)?, "out"))
}

/// # Safety
/// `series` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_estimate_rho_autocorr(series: *const f64, len: usize, max_lag: usize, out: *mut f64) -> McpStatus {
    guard(|| write(out, estimate_rho_autocorr(slice(series, len, "series")?, max_lag)?, "out"))
}

/// Conformal quantile of `scores` thinned by `k`; `+inf` when the rank
/// exceeds the thinned sample size. `corrected != 0` selects the corrected rank.
///
/// # Safety
/// `scores` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_conformal_quantile(
    scores: *const f64,
    len: usize,
    alpha: f64,
    k: usize,
    corrected: c_int,
    out: *mut f64,
) -> McpStatus {
    guard(|| {
        let s = slice(scores, len, "scores")?;
        if let Some(bad) = s.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Failure::Arg(format!("score {bad} is not finite and nonnegative")));
        }
        let rule = if corrected != 0 { RankRule::Corrected } else { RankRule::Standard };
        write(out, calibrate_scores(s, alpha, k, rule)?.0, "out")
    })
}

/// Fit `y = a·x + b` on the training pairs and calibrate on every `k`-th
/// calibration pair.
///
/// # Safety
/// Arrays must hold the stated number of doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_predictor_fit_linear(
    train_x: *const f64,
    train_y: *const f64,
    n_train: usize,
    cal_x: *const f64,
    cal_y: *const f64,
    n_cal: usize,
    alpha: f64,
    k: usize,
    corrected: c_int,
    out: *mut *mut McpPredictor,
) -> McpStatus {
    use markov_cp::chains::Trajectory;
    guard(|| {
        let train = Trajectory::new(slice(train_x, n_train, "train_x")?.to_vec(), slice(train_y, n_train, "train_y")?.to_vec(), 0)?;
        let calib = Trajectory::new(slice(cal_x, n_cal, "cal_x")?.to_vec(), slice(cal_y, n_cal, "cal_y")?.to_vec(), 0)?;
        let model = fit_linear(&train)?;
        let scores = residual_scores(&model, &calib)?;
        let rule = if corrected != 0 { RankRule::Corrected } else { RankRule::Standard };
        let (q_hat, rank, m) = calibrate_scores(scores.as_slice(), alpha, k, rule)?;
        let inner = ConformalPredictor { model, q_hat, alpha, calib_size: m, rank };
        write(out, Box::into_raw(Box::new(McpPredictor { inner })), "out")
    })
}

/// Prediction interval at `x`; infinite bounds denote the whole line.
///
/// # Safety
/// `predictor` must be a live handle; `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_predictor_interval(
    predictor: *const McpPredictor,
    x: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> McpStatus {
    guard(|| {
        let iv = handle(predictor, "predictor")?.inner.predict_interval(x);
        write(lower, iv.lower, "lower")?;
        write(upper, iv.upper, "upper")
    })
}

/// Calibrated half-width (possibly `+inf`).
///
/// # Safety
/// `predictor` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_predictor_halfwidth(predictor: *const McpPredictor, out: *mut f64) -> McpStatus {
    guard(|| write(out, handle(predictor, "predictor")?.inner.q_hat, "out"))
}

/// # Safety
/// `predictor` must come from [`mcp_predictor_fit_linear`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcp_predictor_free(predictor: *mut McpPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Run a coverage experiment described by a JSON config string.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_experiment_run(config_json: *const c_char, out: *mut *mut McpReport) -> McpStatus {
    guard(|| {
        non_null(config_json, "config_json")?;
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| Failure::Arg(format!("config is not UTF-8: {e}")))?;
        let inner = run_coverage_experiment(&ExperimentConfig::from_json(text)?)?;
        write(out, Box::into_raw(Box::new(McpReport { inner })), "out")
    })
}

/// Statistics for one method; `InvalidParameter` if the method was not run.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_report_get(report: *const McpReport, method: McpMethod, out: *mut McpMethodStats) -> McpStatus {
    guard(|| {
        let m = Method::from(method);
        let s = handle(report, "report")?
            .inner
            .get(m)
            .ok_or_else(|| Failure::Arg(format!("method {m} is not in the report")))?;
        let stats = McpMethodStats {
            coverage_mean: s.coverage_mean,
            coverage_se: s.coverage_se,
            mean_halfwidth: s.mean_halfwidth.unwrap_or(f64::NAN),
            relative_length_error: s.relative_length_error.unwrap_or(f64::NAN),
            k_used: s.k_used,
            trials: s.trials,
            infinite_intervals: s.infinite_intervals,
        };
        write(out, stats, "out")
    })
}

/// Report as a JSON string owned by the caller; release it with [`mcp_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcp_report_to_json(report: *const McpReport, out: *mut *mut c_char) -> McpStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let text = markov_cp::io::format_report(&r.inner, markov_cp::io::ReportFormat::Json)?;
        let c = CString::new(text).map_err(|e| Failure::Arg(e.to_string()))?;
        write(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `report` must come from [`mcp_experiment_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcp_report_free(report: *mut McpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
