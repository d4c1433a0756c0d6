//! C ABI over `smalldiff`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_parse`
//! style constructors and released with the matching `*_free`. Every fallible
//! call returns an [`SdStatus`]; on failure a message for the calling thread
//! is available from [`sd_last_error`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use smalldiff::simulate::{simulate_path, GridLayout};
use smalldiff::statistic::run_test;
use smalldiff::{Error, Expression, ModelSpec, NoiseKey, ObservedPath, SamplingGrid, SupAbsBm};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Eval = 4,
    Degenerate = 5,
    Numeric = 6,
    Data = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Parsed expression `f(x)`.
pub struct SdExpression(Expression);

/// Model `dX = S(X) dt + eps sigma(X) dW` on `[0, T]`.
pub struct SdModel(ModelSpec);

/// Discretely observed path.
pub struct SdPath(ObservedPath);

/// Outcome of [`sd_run_test`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub sigma_hat: f64,
    pub sup_u: f64,
    pub eps: f64,
    pub n_obs: usize,
    /// 1 when the null is rejected, 0 otherwise.
    pub reject: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse(_) => SdStatus::Parse,
            Error::Eval(_) => SdStatus::Eval,
            Error::InvalidArgument(_)
            | Error::InsufficientSample { .. }
            | Error::MissingFineData => SdStatus::InvalidArgument,
            Error::DegenerateModel(_)
            | Error::DegeneratePath { .. }
            | Error::NotSeparated { .. } => SdStatus::Degenerate,
            Error::BlowUp { .. } | Error::TooManyFailures { .. } => SdStatus::Numeric,
            _ => SdStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SdStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            SdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call into this library.
#[no_mangle]
pub extern "C" fn sd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `source` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_expression_parse(
    source: *const c_char,
    out: *mut *mut SdExpression,
) -> SdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let e = Expression::parse(str_arg(source, "source")?).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(SdExpression(e)));
        Ok(())
    })
}

/// # Safety
/// `expr` must come from [`sd_expression_parse`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_expression_eval(
    expr: *const SdExpression,
    x: f64,
    out: *mut f64,
) -> SdStatus {
    guard(|| {
        let e = ref_arg(expr, "expr")?;
        *out_arg(out, "out")? = e.0.eval(x).map_err(Error::from)?;
        Ok(())
    })
}

/// # Safety
/// `expr` must come from [`sd_expression_parse`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sd_expression_free(expr: *mut SdExpression) {
    if !expr.is_null() {
        drop(Box::from_raw(expr));
    }
}

/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_model_new(
    drift: *const c_char,
    sigma: *const c_char,
    x0: f64,
    horizon: f64,
    eps: f64,
    out: *mut *mut SdModel,
) -> SdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ModelSpec::parse(
            str_arg(drift, "drift")?,
            str_arg(sigma, "sigma")?,
            x0,
            horizon,
            eps,
        )?;
        *out = Box::into_raw(Box::new(SdModel(m)));
        Ok(())
    })
}

/// Limit standard deviation `sqrt(int_0^T sigma(x_t)^2 dt)`.
///
/// # Safety
/// `model` must come from [`sd_model_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_model_sigma_limit(model: *const SdModel, out: *mut f64) -> SdStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        *out_arg(out, "out")? = m.0.sigma_limit()?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`sd_model_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sd_model_free(model: *mut SdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates a path on the uniform grid with mesh `eps^gamma`, using noise
/// stream `(seed, replication)`.
///
/// # Safety
/// `model` must come from [`sd_model_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_path_simulate(
    model: *const SdModel,
    gamma: f64,
    substeps: usize,
    seed: u64,
    replication: u64,
    out: *mut *mut SdPath,
) -> SdStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        let out = out_arg(out, "out")?;
        let grid = SamplingGrid::new(m.horizon(), m.eps(), gamma, GridLayout::Uniform)?;
        let p = simulate_path(m, &grid, substeps, NoiseKey::new(seed, replication), false)?;
        *out = Box::into_raw(Box::new(SdPath(p)));
        Ok(())
    })
}

/// Path from `n` observations. Times must start at 0 and increase strictly.
///
/// # Safety
/// `times` and `values` must point to `n` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sd_path_from_arrays(
    times: *const f64,
    values: *const f64,
    n: usize,
    eps: f64,
    out: *mut *mut SdPath,
) -> SdStatus {
    guard(|| {
        if times.is_null() || values.is_null() {
            return Err(null("times or values"));
        }
        let out = out_arg(out, "out")?;
        let t = std::slice::from_raw_parts(times, n).to_vec();
        let x = std::slice::from_raw_parts(values, n).to_vec();
        let p = ObservedPath::from_observations(t, x, eps)?;
        *out = Box::into_raw(Box::new(SdPath(p)));
        Ok(())
    })
}

/// Number of observations, or 0 for NULL.
///
/// # Safety
/// `path` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sd_path_len(path: *const SdPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.len())
}

/// Copies times and values into caller buffers of capacity `cap`.
///
/// # Safety
/// `path` must come from this library; `times` and `values` must point to
/// `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_path_copy(
    path: *const SdPath,
    times: *mut f64,
    values: *mut f64,
    cap: usize,
) -> SdStatus {
    guard(|| {
        let p = &ref_arg(path, "path")?.0;
        if times.is_null() || values.is_null() {
            return Err(null("times or values"));
        }
        if cap < p.len() {
            return Err(Failure(
                SdStatus::BufferTooSmall,
                format!("buffers hold {cap} values, path has {}", p.len()),
            ));
        }
        ptr::copy_nonoverlapping(p.times().as_ptr(), times, p.len());
        ptr::copy_nonoverlapping(p.values.as_ptr(), values, p.len());
        Ok(())
    })
}

/// # Safety
/// `path` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sd_path_free(path: *mut SdPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Tests `H0: S = null_drift` on `path` at level `alpha`.
///
/// # Safety
/// `path` must come from this library, `null_drift` must be NUL-terminated
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sd_run_test(
    path: *const SdPath,
    null_drift: *const c_char,
    alpha: f64,
    out: *mut SdTestResult,
) -> SdStatus {
    guard(|| {
        let p = &ref_arg(path, "path")?.0;
        let drift = Expression::parse(str_arg(null_drift, "null_drift")?).map_err(Error::from)?;
        let out = out_arg(out, "out")?;
        let r = run_test(p, &drift, alpha)?;
        *out = SdTestResult {
            statistic: r.statistic,
            p_value: r.p_value,
            alpha: r.alpha,
            critical_value: r.critical_value,
            sigma_hat: r.sigma_hat.sigma_hat,
            sup_u: r.curve.sup_abs,
            eps: r.eps,
            n_obs: p.len(),
            reject: i32::from(r.reject),
        };
        Ok(())
    })
}

/// `P(sup_{[0,1]} |B| <= x)`; NaN for NaN input.
#[no_mangle]
pub extern "C" fn sd_cdf(x: f64) -> f64 {
    SupAbsBm::default().cdf(x)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_quantile(p: f64, out: *mut f64) -> SdStatus {
    guard(|| {
        *out_arg(out, "out")? = SupAbsBm::default().quantile(p)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_p_value(d: f64, out: *mut f64) -> SdStatus {
    guard(|| {
        *out_arg(out, "out")? = SupAbsBm::default().p_value(d)?;
        Ok(())
    })
}
