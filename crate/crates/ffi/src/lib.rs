//! C ABI over `thsq-core`.
//!
//! Conventions:
//! - Every fallible function returns a [`ThsqStatus`]. On failure the
//!   message is available from [`thsq_last_error`] on the same thread.
//! - Complex arrays are interleaved `re, im` doubles. Matrices are row-major,
//!   so an `n×n` matrix occupies `2n²` doubles.
//! - Scenarios and reports are opaque handles released with their `_free`
//!   function. Passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use num_complex::Complex64;
use thsq_core::config::{parse_config_with, ParseOptions, Scenario};
use thsq_core::control::{fidelity, lie_rank};
use thsq_core::metric::{dieudonne_residual, solve_metric, MetricOptions};
use thsq_core::run::{run_scenario, RunError, RunOptions, RunReport};
use thsq_core::{CMatrix, CVector, ThsError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThsqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    IoError = 5,
    NumericalError = 6,
    Panic = 7,
}

/// Parsed scenario.
pub struct ThsqScenario {
    inner: Scenario,
}

/// Result of a scenario run.
pub struct ThsqReport {
    inner: RunReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(ThsqStatus, String);

impl From<ThsError> for Failure {
    fn from(e: ThsError) -> Self {
        Failure(ThsqStatus::NumericalError, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let status = match e.name() {
            "ParseError" => ThsqStatus::ParseError,
            "ValidationError" => ThsqStatus::ValidationError,
            "IoError" => ThsqStatus::IoError,
            _ => ThsqStatus::NumericalError,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ThsqStatus::InvalidArgument, msg.into())
}

/// Runs `body`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(body: F) -> ThsqStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ThsqStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside thsq");
            ThsqStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(ThsqStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn read_matrix(p: *const f64, n: usize, what: &str) -> Result<CMatrix, Failure> {
    non_null(p, what)?;
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let data = std::slice::from_raw_parts(p, 2 * n * n);
    Ok(CMatrix::from_fn(n, n, |i, j| {
        let k = 2 * (i * n + j);
        Complex64::new(data[k], data[k + 1])
    }))
}

unsafe fn read_vector(p: *const f64, n: usize, what: &str) -> Result<CVector, Failure> {
    non_null(p, what)?;
    let data = std::slice::from_raw_parts(p, 2 * n);
    Ok(CVector::from_fn(n, |i, _| Complex64::new(data[2 * i], data[2 * i + 1])))
}

unsafe fn write_matrix(m: &CMatrix, out: *mut f64) {
    let n = m.nrows();
    let data = std::slice::from_raw_parts_mut(out, 2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let k = 2 * (i * n + j);
            data[k] = m[(i, j)].re;
            data[k + 1] = m[(i, j)].im;
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn thsq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn thsq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a TOML scenario.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thsq_scenario_parse(
    toml: *const c_char,
    seed: u64,
    out: *mut *mut ThsqScenario,
) -> ThsqStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = read_str(toml, "toml")?;
        let inner = parse_config_with(text, &ParseOptions { seed }).map_err(RunError::from)?;
        *out = Box::into_raw(Box::new(ThsqScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from [`thsq_scenario_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn thsq_scenario_free(scenario: *mut ThsqScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Hilbert-space dimension of the scenario, or 0 for NULL.
///
/// # Safety
/// `scenario` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn thsq_scenario_dim(scenario: *const ThsqScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.inner.dim())
}

/// Runs a scenario, writing its files into `out_dir`.
///
/// # Safety
/// `scenario` must be a live handle, `out_dir` a NUL-terminated path and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thsq_scenario_run(
    scenario: *const ThsqScenario,
    out_dir: *const c_char,
    out: *mut *mut ThsqReport,
) -> ThsqStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(scenario, "scenario")?;
        let dir = PathBuf::from(read_str(out_dir, "out_dir")?);
        let report = run_scenario(&(*scenario).inner, &RunOptions { out_dir: dir })?;
        *out = Box::into_raw(Box::new(ThsqReport { inner: report }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`thsq_scenario_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn thsq_report_free(report: *mut ThsqReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Looks up a named value of the report, such as `norm_drift` or `fidelity`.
///
/// # Safety
/// `report` must be a live handle, `key` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn thsq_report_value(report: *const ThsqReport, key: *const c_char, out: *mut f64) -> ThsqStatus {
    guard(|| {
        non_null(report, "report")?;
        non_null(out, "out")?;
        let key = read_str(key, "key")?;
        *out = (*report)
            .inner
            .value(key)
            .ok_or_else(|| invalid(format!("report has no value '{key}'")))?;
        Ok(())
    })
}

/// Copies the summary line into `buf` (truncated, always NUL-terminated when
/// `len > 0`) and returns the length needed including the terminator.
///
/// # Safety
/// `report` must be a live handle; `buf` must hold `len` bytes or be NULL.
#[no_mangle]
pub unsafe extern "C" fn thsq_report_summary(report: *const ThsqReport, buf: *mut c_char, len: usize) -> usize {
    let Some(report) = report.as_ref() else {
        return 0;
    };
    let line = report.inner.summary_line();
    let bytes = line.as_bytes();
    if !buf.is_null() && len > 0 {
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
    }
    bytes.len() + 1
}

/// Metric `Θ = Σ κₖ lₖlₖ†` of the `n×n` operator `h`. `weights` holds `n`
/// positive values or is NULL for unit weights. Writes `2n²` doubles.
///
/// # Safety
/// `h` must hold `2n²` doubles, `weights` NULL or `n` doubles,
/// `theta_out` room for `2n²` doubles.
#[no_mangle]
pub unsafe extern "C" fn thsq_solve_metric(
    h: *const f64,
    n: usize,
    weights: *const f64,
    theta_out: *mut f64,
) -> ThsqStatus {
    guard(|| {
        let h = read_matrix(h, n, "h")?;
        non_null(theta_out, "theta_out")?;
        let weights = if weights.is_null() {
            vec![1.0; n]
        } else {
            std::slice::from_raw_parts(weights, n).to_vec()
        };
        let candidate = solve_metric(&h, &weights, &MetricOptions::default())?;
        write_matrix(&candidate.theta, theta_out);
        Ok(())
    })
}

/// `‖h†Θ − Θh‖_F`.
///
/// # Safety
/// `h` and `theta` must each hold `2n²` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn thsq_dieudonne_residual(
    h: *const f64,
    theta: *const f64,
    n: usize,
    out: *mut f64,
) -> ThsqStatus {
    guard(|| {
        let h = read_matrix(h, n, "h")?;
        let theta = read_matrix(theta, n, "theta")?;
        non_null(out, "out")?;
        *out = dieudonne_residual(&h, &theta);
        Ok(())
    })
}

/// Dimension of the real Lie algebra generated by `{−i·opₖ}` for `count`
/// consecutive `n×n` matrices in `ops`.
///
/// # Safety
/// `ops` must hold `count·2n²` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn thsq_lie_rank(ops: *const f64, count: usize, n: usize, out: *mut usize) -> ThsqStatus {
    guard(|| {
        non_null(out, "out")?;
        let stride = 2 * n * n;
        let mats = (0..count)
            .map(|k| read_matrix(ops.wrapping_add(k * stride), n, "ops"))
            .collect::<Result<Vec<_>, _>>()?;
        *out = lie_rank(&mats);
        Ok(())
    })
}

/// `|⟨⟨φ|ψ⟩|² / (⟨⟨φ|φ⟩⟨⟨ψ|ψ⟩)` under the metric `theta`.
///
/// # Safety
/// `psi` and `target` must hold `2n` doubles, `theta` `2n²`; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn thsq_fidelity(
    psi: *const f64,
    target: *const f64,
    theta: *const f64,
    n: usize,
    out: *mut f64,
) -> ThsqStatus {
    guard(|| {
        let theta = read_matrix(theta, n, "theta")?;
        let psi = read_vector(psi, n, "psi")?;
        let target = read_vector(target, n, "target")?;
        non_null(out, "out")?;
        *out = fidelity(&psi, &target, &theta)?;
        Ok(())
    })
}
