//! C ABI over the `splinegee` estimator.
//!
//! Objects are exposed as opaque handles created by `*_new`/`sgee_fit` and
//! released with the matching `*_free`. Every fallible call returns an
//! [`SgeeStatus`]; on failure, `sgee_last_error_message` describes the
//! error on the calling thread. Strings returned through out-parameters
//! must be released with `sgee_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use splinegee::marginal::CorrelationStructure;
use splinegee::pipeline::{fit_dataset, Family, FitOptions, FittedModel};
use splinegee::simgen::{run_monte_carlo, Example1Config, Example2Config, ExampleConfig, McConfig};
use splinegee::two_step::AlphaSpec;
use splinegee::{Cluster, ClusteredDataset, GeeError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgeeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DomainError = 3,
    NumericalFailure = 4,
    NotConverged = 5,
    SelectionFailed = 6,
    InfeasibleCorrelation = 7,
    TooManyFailures = 8,
    Panic = 99,
}

fn status_of(e: &GeeError) -> SgeeStatus {
    match e {
        GeeError::Domain { .. } | GeeError::ParameterDomain(_) => SgeeStatus::DomainError,
        GeeError::NumericDomain(_)
        | GeeError::DegenerateDesign(_)
        | GeeError::DegenerateVariance(_)
        | GeeError::Saturation { .. }
        | GeeError::IllConditionedCovariance { .. }
        | GeeError::SingularInformation(_)
        | GeeError::RankDeficientDesign(_)
        | GeeError::NotIdentifiable(_)
        | GeeError::NotPositiveDefinite(_) => SgeeStatus::NumericalFailure,
        GeeError::NotConverged { .. } => SgeeStatus::NotConverged,
        GeeError::SelectionFailed(_) => SgeeStatus::SelectionFailed,
        GeeError::InfeasibleCorrelation { .. } => SgeeStatus::InfeasibleCorrelation,
        GeeError::TooManyFailures { .. } => SgeeStatus::TooManyFailures,
        _ => SgeeStatus::InvalidArgument,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), (SgeeStatus, String)>) -> SgeeStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgeeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SgeeStatus::Panic
        }
    }
}

fn gee(e: GeeError) -> (SgeeStatus, String) {
    (status_of(&e), format!("{}: {}", e.code(), e))
}

fn null(what: &str) -> (SgeeStatus, String) {
    (SgeeStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (SgeeStatus, String) {
    (SgeeStatus::InvalidArgument, msg.into())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn sgee_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn sgee_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opaque clustered dataset.
pub struct SgeeDataset {
    inner: ClusteredDataset,
}

/// Opaque fitted model.
pub struct SgeeFit {
    inner: FittedModel,
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (SgeeStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Builds a dataset from row-major arrays with one row per observation.
/// Rows sharing a cluster id form a cluster, in row order; clusters are
/// ordered by id. Additive covariates must lie in [0, 1].
///
/// # Safety
/// `cluster_ids` and `y` must point to `n_obs` values, `x` to
/// `n_obs * d1` and `z` to `n_obs * d2` values (either may be null when its
/// width is zero). `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgee_dataset_new(
    n_obs: usize,
    cluster_ids: *const i64,
    y: *const f64,
    x: *const f64,
    d1: usize,
    z: *const f64,
    d2: usize,
    out: *mut *mut SgeeDataset,
) -> SgeeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n_obs == 0 {
            return Err(invalid("n_obs must be positive"));
        }
        if cluster_ids.is_null() {
            return Err(null("cluster_ids"));
        }
        let ids = std::slice::from_raw_parts(cluster_ids, n_obs);
        let y = slice(y, n_obs, "y")?;
        let x = slice(x, n_obs * d1, "x")?;
        let z = slice(z, n_obs * d2, "z")?;
        let mut order: Vec<usize> = (0..n_obs).collect();
        order.sort_by_key(|&r| ids[r]);
        let mut clusters = Vec::new();
        let mut start = 0;
        while start < n_obs {
            let id = ids[order[start]];
            let mut end = start;
            while end < n_obs && ids[order[end]] == id {
                end += 1;
            }
            let rows = &order[start..end];
            let m = rows.len();
            clusters.push(Cluster {
                id: id.to_string(),
                y: rows.iter().map(|&r| y[r]).collect(),
                x: DMatrix::from_fn(m, d1, |j, k| x[rows[j] * d1 + k]),
                z: DMatrix::from_fn(m, d2, |j, l| z[rows[j] * d2 + l]),
            });
            start = end;
        }
        let linear = (1..=d1).map(|k| format!("x{k}")).collect();
        let additive = (1..=d2).map(|l| format!("z{l}")).collect();
        let ds = ClusteredDataset::new(clusters, linear, additive).map_err(gee)?;
        *out = Box::into_raw(Box::new(SgeeDataset { inner: ds }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from `sgee_dataset_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgee_dataset_free(ds: *mut SgeeDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of clusters, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn sgee_dataset_n_clusters(ds: *const SgeeDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.n_clusters())
}

/// Fit configuration. `family`: 0 gaussian, 1 binary. `correlation`:
/// 0 independence, 1 exchangeable, 2 AR(1). `estimate_alpha`: nonzero to
/// estimate the working-correlation parameter, otherwise `alpha` is used.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SgeeFitOptions {
    pub family: i32,
    pub correlation: i32,
    pub estimate_alpha: i32,
    pub alpha: f64,
    pub degree: u32,
    pub level: f64,
}

#[no_mangle]
pub extern "C" fn sgee_fit_options_default() -> SgeeFitOptions {
    SgeeFitOptions {
        family: 0,
        correlation: 1,
        estimate_alpha: 1,
        alpha: 0.0,
        degree: 3,
        level: 0.95,
    }
}

fn structure_of(code: i32) -> Result<CorrelationStructure, (SgeeStatus, String)> {
    match code {
        0 => Ok(CorrelationStructure::Ind),
        1 => Ok(CorrelationStructure::Ex),
        2 => Ok(CorrelationStructure::Ar1),
        other => Err(invalid(format!("unknown correlation code {other}"))),
    }
}

fn options_of(o: &SgeeFitOptions) -> Result<FitOptions, (SgeeStatus, String)> {
    let family = match o.family {
        0 => Family::Gaussian,
        1 => Family::Binary,
        other => return Err(invalid(format!("unknown family code {other}"))),
    };
    Ok(FitOptions {
        family,
        structure: structure_of(o.correlation)?,
        alpha: if o.estimate_alpha != 0 {
            AlphaSpec::Estimate
        } else {
            AlphaSpec::Fixed(o.alpha)
        },
        degree: o.degree as usize,
        level: o.level,
        ..FitOptions::default()
    })
}

/// Fits the model; `options` may be null for the defaults.
///
/// # Safety
/// `ds` must be a live dataset handle, `options` null or valid, and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgee_fit(
    ds: *const SgeeDataset,
    options: *const SgeeFitOptions,
    out: *mut *mut SgeeFit,
) -> SgeeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let opts = match options.as_ref() {
            Some(o) => options_of(o)?,
            None => options_of(&sgee_fit_options_default())?,
        };
        let model = fit_dataset(&ds.inner, &opts).map_err(gee)?;
        *out = Box::into_raw(Box::new(SgeeFit { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle from `sgee_fit` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgee_fit_free(fit: *mut SgeeFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of linear coefficients, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn sgee_fit_n_beta(fit: *const SgeeFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.beta().len())
}

/// Number of additive components, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn sgee_fit_n_components(fit: *const SgeeFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.components.len())
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), (SgeeStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < values.len() {
        return Err(invalid(format!("buffer of {len} for {} values", values.len())));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Copies the linear coefficient estimates into `out` (capacity `len`).
///
/// # Safety
/// `fit` must be a live fit handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sgee_fit_beta(fit: *const SgeeFit, out: *mut f64, len: usize) -> SgeeStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        copy_out(f.inner.beta(), out, len)
    })
}

/// Copies the sandwich standard errors of the linear coefficients.
///
/// # Safety
/// `fit` must be a live fit handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sgee_fit_beta_se(fit: *const SgeeFit, out: *mut f64, len: usize) -> SgeeStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        copy_out(&f.inner.beta_std_errors(), out, len)
    })
}

/// Estimate of component `component` at `z` in [0, 1] with its pointwise
/// interval at confidence `level`.
///
/// # Safety
/// `fit` must be a live fit handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgee_fit_component_eval(
    fit: *const SgeeFit,
    component: usize,
    z: f64,
    level: f64,
    estimate: *mut f64,
    lower: *mut f64,
    upper: *mut f64,
) -> SgeeStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if estimate.is_null() || lower.is_null() || upper.is_null() {
            return Err(null("output"));
        }
        let ci = f.inner.interval(component, z, level).map_err(gee)?;
        *estimate = ci.estimate;
        *lower = ci.lower;
        *upper = ci.upper;
        Ok(())
    })
}

fn into_c_string(s: String, out: *mut *mut c_char) -> Result<(), (SgeeStatus, String)> {
    let c = CString::new(s).map_err(|_| invalid("string contains nul"))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// JSON fit report; release with `sgee_string_free`.
///
/// # Safety
/// `fit` must be a live fit handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgee_fit_report_json(fit: *const SgeeFit, out: *mut *mut c_char) -> SgeeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let report = f.inner.report().map_err(gee)?;
        let s = serde_json::to_string(&report).map_err(|e| gee(e.into()))?;
        into_c_string(s, out)
    })
}

/// Runs a Monte Carlo study on built-in design `example` (1 or 2) and
/// returns the JSON report. `m = 0` selects the design's default cluster
/// size; `threads = 0` uses all cores.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgee_simulate_json(
    example: u32,
    n: usize,
    m: usize,
    nsim: usize,
    correlation: i32,
    seed: u64,
    threads: usize,
    out: *mut *mut c_char,
) -> SgeeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ex = match example {
            1 => ExampleConfig::Continuous(Example1Config::new(n, if m == 0 { 20 } else { m })),
            2 => ExampleConfig::Binary(Example2Config {
                m: (m != 0).then_some(m),
                ..Example2Config::new(n)
            }),
            other => return Err(invalid(format!("unknown example {other}"))),
        };
        let cfg = McConfig::new(ex, structure_of(correlation)?, nsim, seed);
        let report = run_monte_carlo(&cfg, (threads != 0).then_some(threads)).map_err(gee)?;
        let s = serde_json::to_string(&report).map_err(|e| gee(e.into()))?;
        into_c_string(s, out)
    })
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sgee_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(c) => c,
        Err(_) => c"unknown",
    };
    V.as_ptr()
}
