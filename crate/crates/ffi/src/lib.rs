//! C ABI over the exact transport solvers and trained generators.
//!
//! Every function returns a [`QpStatus`]. On failure a description is kept
//! per thread and can be read with [`qp_last_error_message`]. Handles are
//! opaque, created by `*_new`/`*_load` and released by the matching `*_free`.
//! Arrays are row major; a cloud of `n` points in dimension `dim` occupies
//! `n * dim` doubles.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qpwgan::autodiff::checkpoint::load_checkpoint;
use qpwgan::autodiff::{MlpNetwork, Tensor};
use qpwgan::dual::c_transform;
use qpwgan::measure::{CostSpec, DiscreteMeasure, Point};
use qpwgan::ot::{ot_1d_sorted, ot_exact, wasserstein_qp};
use qpwgan::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidMeasure = 4,
    Infeasible = 5,
    NonFinite = 6,
    Io = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

/// Weighted point cloud.
pub struct QpMeasure {
    inner: DiscreteMeasure,
}

/// Generator network loaded from a checkpoint.
pub struct QpGenerator {
    inner: MlpNetwork,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> QpStatus {
    match e {
        Error::DimensionMismatch { .. } => QpStatus::DimensionMismatch,
        Error::InvalidMeasure(_) | Error::Empty(_) => QpStatus::InvalidMeasure,
        Error::Infeasible(_) => QpStatus::Infeasible,
        Error::NonFinite { .. } => QpStatus::NonFinite,
        Error::Io(_) => QpStatus::Io,
        Error::InvalidParameter(_)
        | Error::BruteForceLimit { .. }
        | Error::Autodiff(_)
        | Error::Config(_) => QpStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, mapping errors and panics to a status and recording the
/// message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QpStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            QpStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal error");
            QpStatus::Internal
        }
    }
}

fn area(n: usize, dim: usize) -> Result<usize, Fail> {
    n.checked_mul(dim)
        .ok_or_else(|| Error::InvalidParameter("n * dim overflows".into()).into())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(
    p: *mut f64,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn measure<'a>(
    p: *const QpMeasure,
    what: &'static str,
) -> Result<&'a DiscreteMeasure, Fail> {
    p.as_ref().map(|m| &m.inner).ok_or(Fail::Null(what))
}

fn points(coords: &[f64], dim: usize) -> Result<Vec<Point>, Fail> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dim must be >= 1".into()).into());
    }
    Ok(coords
        .chunks(dim)
        .map(|c| Point::new(c.to_vec()))
        .collect::<Result<_, _>>()?)
}

fn spec(q: f64, p: f64) -> Result<CostSpec, Fail> {
    Ok(CostSpec::new(q, p)?)
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn qp_status_name(status: QpStatus) -> *const c_char {
    let s: &'static CStr = match status {
        QpStatus::Ok => c"ok",
        QpStatus::NullPointer => c"null pointer",
        QpStatus::InvalidArgument => c"invalid argument",
        QpStatus::DimensionMismatch => c"dimension mismatch",
        QpStatus::InvalidMeasure => c"invalid measure",
        QpStatus::Infeasible => c"infeasible",
        QpStatus::NonFinite => c"non-finite value",
        QpStatus::Io => c"i/o error",
        QpStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Library version string.
#[no_mangle]
pub extern "C" fn qp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a measure from `n` points of dimension `dim`. `weights` may be
/// null for uniform weights; otherwise it holds `n` nonnegative values
/// summing to one.
#[no_mangle]
pub unsafe extern "C" fn qp_measure_new(
    coords: *const f64,
    weights: *const f64,
    n: usize,
    dim: usize,
    out_measure: *mut *mut QpMeasure,
) -> QpStatus {
    guard(|| {
        let slot = out(out_measure, "out_measure")?;
        *slot = ptr::null_mut();
        let pts = points(slice(coords, area(n, dim)?, "coords")?, dim)?;
        let inner = if weights.is_null() {
            qpwgan::measure::empirical_measure(pts)?
        } else {
            DiscreteMeasure::new(pts, slice(weights, n, "weights")?.to_vec())?
        };
        *slot = Box::into_raw(Box::new(QpMeasure { inner }));
        Ok(())
    })
}

/// Releases a measure. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn qp_measure_free(m: *mut QpMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of atoms, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn qp_measure_len(m: *const QpMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.inner.len())
}

/// Point dimension, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn qp_measure_dim(m: *const QpMeasure) -> usize {
    m.as_ref().map_or(0, |m| m.inner.dim())
}

/// Exact OT between `mu` and `nu` under cost `d_q^p / p`. `plan` (size
/// `len(mu) * len(nu)`), `phi` (size `len(mu)`) and `psi` (size `len(nu)`)
/// are optional outputs and may be null.
#[no_mangle]
pub unsafe extern "C" fn qp_ot_exact(
    mu: *const QpMeasure,
    nu: *const QpMeasure,
    q: f64,
    p: f64,
    out_value: *mut f64,
    plan: *mut f64,
    phi: *mut f64,
    psi: *mut f64,
) -> QpStatus {
    guard(|| {
        let (mu, nu) = (measure(mu, "mu")?, measure(nu, "nu")?);
        let value = out(out_value, "out_value")?;
        let (gamma, duals) = ot_exact(mu, nu, spec(q, p)?)?;
        *value = gamma.value;
        if !plan.is_null() {
            slice_mut(plan, area(mu.len(), nu.len())?, "plan")?.copy_from_slice(gamma.as_slice());
        }
        if !phi.is_null() {
            slice_mut(phi, mu.len(), "phi")?.copy_from_slice(&duals.phi);
        }
        if !psi.is_null() {
            slice_mut(psi, nu.len(), "psi")?.copy_from_slice(&duals.psi);
        }
        Ok(())
    })
}

/// `W_{q,p}`, the p-th root of the exact OT value.
#[no_mangle]
pub unsafe extern "C" fn qp_wasserstein(
    mu: *const QpMeasure,
    nu: *const QpMeasure,
    q: f64,
    p: f64,
    out_value: *mut f64,
) -> QpStatus {
    guard(|| {
        let (mu, nu) = (measure(mu, "mu")?, measure(nu, "nu")?);
        let value = out(out_value, "out_value")?;
        *value = wasserstein_qp(mu, nu, spec(q, p)?)?;
        Ok(())
    })
}

/// OT between two uniform 1-D samples of equal length via sorted matching.
#[no_mangle]
pub unsafe extern "C" fn qp_ot_1d_sorted(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    q: f64,
    p: f64,
    out_value: *mut f64,
) -> QpStatus {
    guard(|| {
        let value = out(out_value, "out_value")?;
        *value = ot_1d_sorted(slice(xs, n, "xs")?, slice(ys, n, "ys")?, spec(q, p)?)?;
        Ok(())
    })
}

/// `min_k c(b_k, y) - phi_k` over the `n` search points `b`, with the first
/// minimizing index.
#[no_mangle]
pub unsafe extern "C" fn qp_c_transform(
    phi: *const f64,
    b: *const f64,
    n: usize,
    dim: usize,
    y: *const f64,
    q: f64,
    p: f64,
    out_value: *mut f64,
    out_index: *mut usize,
) -> QpStatus {
    guard(|| {
        let value = out(out_value, "out_value")?;
        let pts = points(slice(b, area(n, dim)?, "b")?, dim)?;
        let y = Point::new(slice(y, dim, "y")?.to_vec())?;
        let (v, k) = c_transform(slice(phi, n, "phi")?, &pts, &y, spec(q, p)?)?;
        *value = v;
        if let Some(i) = out_index.as_mut() {
            *i = k;
        }
        Ok(())
    })
}

/// Loads a generator checkpoint written by the `qpwgan` CLI.
#[no_mangle]
pub unsafe extern "C" fn qp_generator_load(
    path: *const c_char,
    out_generator: *mut *mut QpGenerator,
) -> QpStatus {
    guard(|| {
        let slot = out(out_generator, "out_generator")?;
        *slot = ptr::null_mut();
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidParameter("path is not UTF-8".into()))?;
        let inner = load_checkpoint(Path::new(path))?;
        *slot = Box::into_raw(Box::new(QpGenerator { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qp_generator_free(g: *mut QpGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Noise dimension, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn qp_generator_input_dim(g: *const QpGenerator) -> usize {
    g.as_ref().map_or(0, |g| g.inner.input_dim())
}

/// Sample dimension, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn qp_generator_output_dim(g: *const QpGenerator) -> usize {
    g.as_ref().map_or(0, |g| g.inner.output_dim())
}

/// Maps `n` noise vectors (`n * input_dim` doubles) to `n` samples written
/// to `out_samples` (`n * output_dim` doubles).
#[no_mangle]
pub unsafe extern "C" fn qp_generator_apply(
    g: *const QpGenerator,
    noise: *const f64,
    n: usize,
    out_samples: *mut f64,
) -> QpStatus {
    guard(|| {
        let g = &g.as_ref().ok_or(Fail::Null("generator"))?.inner;
        let (din, dout) = (g.input_dim(), g.output_dim());
        let z = slice(noise, area(n, din)?, "noise")?;
        let dst = slice_mut(out_samples, area(n, dout)?, "out_samples")?;
        if n == 0 {
            return Ok(());
        }
        let y = g.eval(&Tensor::from_vec(n, din, z.to_vec()))?;
        dst.copy_from_slice(&y.data);
        Ok(())
    })
}
