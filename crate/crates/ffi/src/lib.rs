//! C ABI over the `isamfr` library.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Complex buffers are interleaved `(re, im)` doubles,
//! `n_x * n_z` pairs in row-major order with the A-scan index slowest; real
//! buffers hold `n_x * n_z` doubles in the same order. Every fallible call
//! returns an [`IsamStatus`]; on failure [`isam_last_error`] describes what
//! went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use isamfr::data::{make_grid, ComplexSpectra, DispersionModel, GridSpec, RealSpectra, SpectralSpace, SusceptibilityImage};
use isamfr::isam::{k_adjoint, k_forward, khat_adjoint, khat_forward, plan_nufft, NufftPlan};
use isamfr::mbir::ResidualBase;
use isamfr::pipeline::{reconstruct, Method, ReconParams};
use isamfr::Error;
use ndarray::Array2;
use num_complex::Complex64;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferSize = 3,
    NonFinite = 4,
    Evanescent = 5,
    SolverDiverged = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsamMethod {
    Ifft = 0,
    Isam = 1,
    Defr = 2,
    DefrIsam = 3,
    Mbir = 4,
    MbirPlus = 5,
}

impl From<IsamMethod> for Method {
    fn from(m: IsamMethod) -> Self {
        match m {
            IsamMethod::Ifft => Method::Ifft,
            IsamMethod::Isam => Method::Isam,
            IsamMethod::Defr => Method::Defr,
            IsamMethod::DefrIsam => Method::DefrIsam,
            IsamMethod::Mbir => Method::Mbir,
            IsamMethod::MbirPlus => Method::MbirPlus,
        }
    }
}

/// Tunables for [`isam_reconstruct`]; start from [`isam_recon_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsamReconParams {
    pub defr_iters: usize,
    pub defr_floor: f64,
    /// Nonzero adds the compensated residual to the DEFR image.
    pub defr_residual: i32,
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Nonzero re-adds the back-projected residual to the MBIR output.
    pub add_residual: i32,
    pub step_scale: f64,
    pub epsilon: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Nonzero takes the residual from the extrapolated iterate.
    pub residual_extrapolated: i32,
}

impl IsamReconParams {
    fn to_params(self, plan: &NufftPlan) -> ReconParams {
        ReconParams {
            nufft_width: plan.kernel_width(),
            nufft_oversample: plan.oversampling(),
            defr_iters: self.defr_iters,
            defr_floor: self.defr_floor,
            defr_residual: self.defr_residual != 0,
            lambda: self.lambda,
            tol: self.tol,
            max_iters: self.max_iters,
            add_residual: self.add_residual != 0,
            step_scale: self.step_scale,
            epsilon: self.epsilon,
            w_min: self.w_min,
            w_max: self.w_max,
            residual_base: if self.residual_extrapolated != 0 {
                ResidualBase::Extrapolated
            } else {
                ResidualBase::Proximal
            },
        }
    }
}

/// Acquisition geometry.
pub struct IsamGrid(Arc<GridSpec>);

/// Precomputed forward/adjoint operator for one grid.
pub struct IsamPlan(NufftPlan);

/// Dispersion phase polynomial sampled on one grid.
pub struct IsamDispersion(DispersionModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(IsamStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NonFinite(_) => IsamStatus::NonFinite,
            Error::SolverDiverged { .. } => IsamStatus::SolverDiverged,
            Error::Evanescent { .. } => IsamStatus::Evanescent,
            Error::ShapeMismatch { .. } => IsamStatus::BufferSize,
            _ => IsamStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(IsamStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure or panic and returns its status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IsamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IsamStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            IsamStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, want: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err(Fail(IsamStatus::BufferSize, format!("{what} holds {len} doubles, expected {want}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, want: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err(Fail(IsamStatus::BufferSize, format!("{what} holds {len} doubles, expected {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn to_complex(grid: &GridSpec, v: &[f64]) -> Array2<Complex64> {
    let vals = v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    Array2::from_shape_vec(grid.shape(), vals).expect("length checked")
}

fn from_complex(a: &Array2<Complex64>, out: &mut [f64]) {
    for (o, v) in out.chunks_exact_mut(2).zip(a.iter()) {
        o[0] = v.re;
        o[1] = v.im;
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn isam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn isam_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn isam_recon_params_default() -> IsamReconParams {
    let p = ReconParams::default();
    IsamReconParams {
        defr_iters: p.defr_iters,
        defr_floor: p.defr_floor,
        defr_residual: p.defr_residual as i32,
        lambda: p.lambda,
        tol: p.tol,
        max_iters: p.max_iters,
        add_residual: p.add_residual as i32,
        step_scale: p.step_scale,
        epsilon: p.epsilon,
        w_min: p.w_min,
        w_max: p.w_max,
        residual_extrapolated: (p.residual_base == ResidualBase::Extrapolated) as i32,
    }
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn isam_grid_new(
    n_x: usize,
    n_z: usize,
    k_min: f64,
    k_max: f64,
    lateral_pitch: f64,
    focal_z_index: usize,
    out: *mut *mut IsamGrid,
) -> IsamStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = make_grid(n_x, n_z, k_min, k_max, lateral_pitch, focal_z_index)?;
        *out = Box::into_raw(Box::new(IsamGrid(Arc::new(g))));
        Ok(())
    })
}

/// # Safety
/// `grid` must come from [`isam_grid_new`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn isam_grid_free(grid: *mut IsamGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Builds the operator plan. `kernel_width` 0 and `oversampling` 0 select
/// the defaults (6 and 2.0).
///
/// # Safety
/// `grid` must be a live grid handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isam_plan_new(
    grid: *const IsamGrid,
    kernel_width: usize,
    oversampling: f64,
    out: *mut *mut IsamPlan,
) -> IsamStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let width = if kernel_width == 0 { isamfr::isam::DEFAULT_KERNEL_WIDTH } else { kernel_width };
        let over = if oversampling == 0.0 { isamfr::isam::DEFAULT_OVERSAMPLING } else { oversampling };
        let plan = plan_nufft(g.0.clone(), width, over)?;
        *out = Box::into_raw(Box::new(IsamPlan(plan)));
        Ok(())
    })
}

/// # Safety
/// `plan` must come from [`isam_plan_new`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn isam_plan_free(plan: *mut IsamPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Estimated spectral norm of the operator, or NaN for a NULL plan.
///
/// # Safety
/// `plan` must be NULL or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn isam_plan_op_norm(plan: *const IsamPlan) -> f64 {
    plan.as_ref().map_or(f64::NAN, |p| p.0.op_norm())
}

/// `coeffs` holds `a_2, a_3, …` (at most four); `n_coeffs` may be 0.
///
/// # Safety
/// `grid` must be a live grid handle, `coeffs` readable for `n_coeffs`
/// doubles (or NULL when `n_coeffs` is 0) and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isam_dispersion_new(
    grid: *const IsamGrid,
    k_0: f64,
    coeffs: *const f64,
    n_coeffs: usize,
    out: *mut *mut IsamDispersion,
) -> IsamStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c: &[f64] = if n_coeffs == 0 { &[] } else { slice(coeffs, n_coeffs, n_coeffs, "coeffs")? };
        let d = DispersionModel::new(&g.0, k_0, c)?;
        *out = Box::into_raw(Box::new(IsamDispersion(d)));
        Ok(())
    })
}

/// # Safety
/// `d` must come from [`isam_dispersion_new`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn isam_dispersion_free(d: *mut IsamDispersion) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

#[derive(Clone, Copy)]
enum Op {
    Forward,
    Adjoint,
}

unsafe fn apply(
    plan: *const IsamPlan,
    d: Option<*const IsamDispersion>,
    op: Op,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> IsamStatus {
    guard(|| {
        let plan = &deref(plan, "plan")?.0;
        let d = match d {
            Some(p) => Some(&deref(p, "dispersion")?.0),
            None => None,
        };
        let grid = plan.grid().clone();
        let n = 2 * grid.n_x() * grid.n_z();
        let x = to_complex(&grid, slice(input, input_len, n, "input")?);
        let out = slice_mut(output, output_len, n, "output")?;
        let y = match op {
            Op::Forward => {
                let eta = SusceptibilityImage::new(grid, x)?;
                match d {
                    Some(d) => khat_forward(&eta, plan, d)?.into_data(),
                    None => k_forward(&eta, plan)?.into_data(),
                }
            }
            Op::Adjoint => {
                let s = ComplexSpectra::new(grid, SpectralSpace::XK, x)?;
                match d {
                    Some(d) => khat_adjoint(&s, plan, d)?.into_data(),
                    None => k_adjoint(&s, plan)?.into_data(),
                }
            }
        };
        from_complex(&y, out);
        Ok(())
    })
}

/// `s = K η`, image in, spectra out.
///
/// # Safety
/// `plan` must be a live handle; `input` readable and `output` writable for
/// the stated lengths, which must both equal `2 * n_x * n_z`.
#[no_mangle]
pub unsafe extern "C" fn isam_k_forward(
    plan: *const IsamPlan,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> IsamStatus {
    apply(plan, None, Op::Forward, input, input_len, output, output_len)
}

/// `η = K^H s`, spectra in, image out.
///
/// # Safety
/// As for [`isam_k_forward`].
#[no_mangle]
pub unsafe extern "C" fn isam_k_adjoint(
    plan: *const IsamPlan,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> IsamStatus {
    apply(plan, None, Op::Adjoint, input, input_len, output, output_len)
}

/// `s = diag(e^{jφ}) K η`.
///
/// # Safety
/// As for [`isam_k_forward`]; `d` must be a live handle built on the same grid.
#[no_mangle]
pub unsafe extern "C" fn isam_khat_forward(
    plan: *const IsamPlan,
    d: *const IsamDispersion,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> IsamStatus {
    apply(plan, Some(d), Op::Forward, input, input_len, output, output_len)
}

/// `η = K^H diag(e^{-jφ}) s`.
///
/// # Safety
/// As for [`isam_khat_forward`].
#[no_mangle]
pub unsafe extern "C" fn isam_khat_adjoint(
    plan: *const IsamPlan,
    d: *const IsamDispersion,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> IsamStatus {
    apply(plan, Some(d), Op::Adjoint, input, input_len, output, output_len)
}

/// Reconstructs a complex image from real spectra with one of the six
/// methods. `d` may be NULL for no dispersion and `params` NULL for the
/// defaults. `iterations`, if not NULL, receives the MBIR iteration count
/// (0 for other methods).
///
/// # Safety
/// Handles must be live; `spectra` readable for `spectra_len = n_x * n_z`
/// doubles; `output` writable for `output_len = 2 * n_x * n_z` doubles.
#[no_mangle]
pub unsafe extern "C" fn isam_reconstruct(
    plan: *const IsamPlan,
    d: *const IsamDispersion,
    method: IsamMethod,
    params: *const IsamReconParams,
    spectra: *const f64,
    spectra_len: usize,
    output: *mut f64,
    output_len: usize,
    iterations: *mut usize,
) -> IsamStatus {
    guard(|| {
        let plan = &deref(plan, "plan")?.0;
        let grid = plan.grid().clone();
        let d = match d.as_ref() {
            Some(d) => d.0.clone(),
            None => DispersionModel::none(&grid),
        };
        let p = params.as_ref().copied().unwrap_or_else(|| isam_recon_params_default());
        let n = grid.n_x() * grid.n_z();
        let s = slice(spectra, spectra_len, n, "spectra")?;
        let out = slice_mut(output, output_len, 2 * n, "output")?;
        let data = Array2::from_shape_vec(grid.shape(), s.to_vec()).expect("length checked");
        let s_d = RealSpectra::new(grid, data)?;
        let rec = reconstruct(method.into(), &s_d, plan, &d, &p.to_params(plan))?;
        from_complex(rec.image.data(), out);
        if !iterations.is_null() {
            *iterations = rec.trace.map_or(0, |t| t.iterations());
        }
        Ok(())
    })
}
