//! C ABI for the probabilistic meshless solver.
//!
//! Objects are opaque handles created by `*_new`/`*_solve` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`PmmStatus`]; on failure a message is available from
//! [`pmm_last_error_message`] until the next failing call on the same thread.
//! Output pointers are only written on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::DVector;
use pmm_core::inverse::{pn_loglik, NoiseModel};
use pmm_core::pmm::{solve_forward, ForwardProblem};
use pmm_core::problems::allen_cahn::ac_deflated_solve;
use pmm_core::problems::poisson::Poisson1D;
use pmm_core::{ForwardPosterior, Kernel, OperatorTag, PmmError, Point, RngStream};

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotPositiveDefinite = 3,
    DimensionMismatch = 4,
    SolveFailed = 5,
    Numerical = 6,
    Panic = 7,
}

/// Kind of linear operator applied to one kernel argument.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmmOperatorKind {
    Identity = 0,
    /// `a * (-Laplacian)`
    NegLaplacian = 1,
    /// `a * (-Laplacian) + c * Id`
    AffineInterior = 2,
    BoundaryTrace = 3,
}

/// Operator descriptor. `a` and `c` are ignored where the kind has none.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PmmOperator {
    pub kind: PmmOperatorKind,
    pub a: f64,
    pub c: f64,
}

impl From<PmmOperator> for OperatorTag {
    fn from(op: PmmOperator) -> Self {
        match op.kind {
            PmmOperatorKind::Identity => OperatorTag::Identity,
            PmmOperatorKind::NegLaplacian => OperatorTag::NegLaplacian { scale: op.a },
            PmmOperatorKind::AffineInterior => OperatorTag::AffineInterior { a: op.a, c: op.c },
            PmmOperatorKind::BoundaryTrace => OperatorTag::BoundaryTrace,
        }
    }
}

/// Opaque covariance kernel.
pub struct PmmKernel(Kernel);

/// Opaque forward posterior of the 1D Poisson problem.
pub struct PmmPosterior(ForwardPosterior);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &PmmError) -> PmmStatus {
    match e {
        PmmError::NotPositiveDefinite { .. } => PmmStatus::NotPositiveDefinite,
        PmmError::DimensionMismatch(_) => PmmStatus::DimensionMismatch,
        PmmError::InvalidArgument(_)
        | PmmError::EmptyDesign
        | PmmError::UnsupportedOperatorPair { .. }
        | PmmError::SolutionIndexOutOfRange { .. } => PmmStatus::InvalidArgument,
        PmmError::SolveFailed(_) => PmmStatus::SolveFailed,
        PmmError::AllZeroMass | PmmError::AllWeightsDegenerate | PmmError::NonFinite(_) => PmmStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Core(PmmError),
}

impl From<PmmError> for Failure {
    fn from(e: PmmError) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PmmStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PmmStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PmmStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn in_slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

fn points_1d(xs: &[f64]) -> Vec<Point> {
    xs.iter().copied().map(Point::d1).collect()
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pmm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Squared-exponential kernel with the given length-scale in dimension 1 or 2.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pmm_kernel_sqexp_new(lengthscale: f64, dim: usize, out: *mut *mut PmmKernel) -> PmmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(PmmKernel(Kernel::sqexp(lengthscale, dim)?)));
        Ok(())
    })
}

/// 1D kernel that satisfies homogeneous Dirichlet conditions, built from a
/// squared-exponential forcing prior.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pmm_kernel_greens_new(
    forcing_lengthscale: f64,
    quadrature_nodes: usize,
    out: *mut *mut PmmKernel,
) -> PmmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(PmmKernel(Kernel::greens(forcing_lengthscale, quadrature_nodes)?)));
        Ok(())
    })
}

/// Releases a kernel. NULL is ignored.
///
/// # Safety
/// `kernel` must be NULL or a handle from a `pmm_kernel_*_new` function that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn pmm_kernel_free(kernel: *mut PmmKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// `left_x right_y k(x, y)` for points given as two coordinates each (the
/// second is ignored in 1D).
///
/// # Safety
/// `kernel` must be a live handle; `x` and `y` must point to two doubles;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmm_kernel_op_eval(
    kernel: *const PmmKernel,
    left: PmmOperator,
    right: PmmOperator,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> PmmStatus {
    guard(|| {
        let k = non_null(kernel, "kernel")?;
        let (x, y) = (in_slice(x, 2, "x")?, in_slice(y, 2, "y")?);
        let out = out_ptr(out, "out")?;
        *out = k.0.op_eval(left.into(), right.into(), &Point::d2(x[0], x[1]), &Point::d2(y[0], y[1]))?;
        Ok(())
    })
}

/// Forward posterior for `-theta u'' = sin(2 pi x)` on (0, 1) with zero
/// boundary values, from `m` interior design points.
///
/// # Safety
/// `kernel` must be a live 1D handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmm_poisson_solve(
    kernel: *const PmmKernel,
    theta: f64,
    m: usize,
    out: *mut *mut PmmPosterior,
) -> PmmStatus {
    guard(|| {
        let k = non_null(kernel, "kernel")?;
        let out = out_ptr(out, "out")?;
        let blocks = Poisson1D::new(theta)?.observation_blocks(m, &k.0)?;
        *out = Box::into_raw(Box::new(PmmPosterior(solve_forward(&blocks, &k.0)?)));
        Ok(())
    })
}

/// Releases a posterior. NULL is ignored.
///
/// # Safety
/// `posterior` must be NULL or a live handle from [`pmm_poisson_solve`].
#[no_mangle]
pub unsafe extern "C" fn pmm_posterior_free(posterior: *mut PmmPosterior) {
    if !posterior.is_null() {
        drop(Box::from_raw(posterior));
    }
}

/// Posterior mean at `n` points `xs`, written to `out[0..n]`.
///
/// # Safety
/// `xs` and `out` must hold `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn pmm_posterior_mean(
    posterior: *const PmmPosterior,
    xs: *const f64,
    n: usize,
    out: *mut f64,
) -> PmmStatus {
    guard(|| {
        let p = non_null(posterior, "posterior")?;
        let pts = points_1d(in_slice(xs, n, "xs")?);
        let out = out_slice(out, n, "out")?;
        out.copy_from_slice(p.0.posterior_mean(&pts)?.as_slice());
        Ok(())
    })
}

/// Posterior pointwise variance at `n` points `xs`, written to `out[0..n]`.
///
/// # Safety
/// `xs` and `out` must hold `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn pmm_posterior_var(
    posterior: *const PmmPosterior,
    xs: *const f64,
    n: usize,
    out: *mut f64,
) -> PmmStatus {
    guard(|| {
        let p = non_null(posterior, "posterior")?;
        let pts = points_1d(in_slice(xs, n, "xs")?);
        let out = out_slice(out, n, "out")?;
        out.copy_from_slice(&p.0.posterior_var(&pts)?);
        Ok(())
    })
}

/// Log-likelihood of data `y` observed at `data_x` with iid noise `sigma`,
/// with the posterior's discretisation covariance added to the noise.
///
/// # Safety
/// `data_x` and `y` must hold `n` doubles each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmm_pn_loglik(
    posterior: *const PmmPosterior,
    data_x: *const f64,
    y: *const f64,
    n: usize,
    sigma: f64,
    out: *mut f64,
) -> PmmStatus {
    guard(|| {
        let p = non_null(posterior, "posterior")?;
        let locs = points_1d(in_slice(data_x, n, "data_x")?);
        let y = DVector::from_column_slice(in_slice(y, n, "y")?);
        let out = out_ptr(out, "out")?;
        *out = pn_loglik(&y, &p.0, &locs, &NoiseModel::iid(sigma, n)?)?;
        Ok(())
    })
}

/// Number of distinct steady Allen–Cahn solutions found by deflated Newton
/// on an `n` by `n` interior lattice.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmm_allen_cahn_count(delta: f64, n: usize, seed: u64, out: *mut usize) -> PmmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ac_deflated_solve(delta, n, &mut RngStream::new(seed, 0))?.len();
        Ok(())
    })
}
