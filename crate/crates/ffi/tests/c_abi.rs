use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;
use std::sync::Arc;

use isamfr::data::{make_grid, DispersionModel, SusceptibilityImage};
use isamfr::isam::{k_forward, khat_adjoint, plan_nufft};
use isamfr_ffi::*;
use ndarray::Array2;
use num_complex::Complex64;

const NX: usize = 8;
const NZ: usize = 32;
const KMIN: f64 = 7.48;
const KMAX: f64 = 8.27;

struct Handles {
    grid: *mut IsamGrid,
    plan: *mut IsamPlan,
    disp: *mut IsamDispersion,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            isam_dispersion_free(self.disp);
            isam_plan_free(self.plan);
            isam_grid_free(self.grid);
        }
    }
}

fn handles() -> Handles {
    let mut h = Handles {
        grid: ptr::null_mut(),
        plan: ptr::null_mut(),
        disp: ptr::null_mut(),
    };
    unsafe {
        assert_eq!(isam_grid_new(NX, NZ, KMIN, KMAX, 2.0, 24, &mut h.grid), IsamStatus::Ok);
        assert_eq!(isam_plan_new(h.grid, 0, 0.0, &mut h.plan), IsamStatus::Ok);
        let coeffs = [120.0, -10.0];
        assert_eq!(
            isam_dispersion_new(h.grid, 7.85, coeffs.as_ptr(), coeffs.len(), &mut h.disp),
            IsamStatus::Ok
        );
    }
    h
}

fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

fn last_error() -> String {
    let p = isam_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(isam_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn forward_matches_library() {
    let h = handles();
    let n = 2 * NX * NZ;
    let x = pseudo_random(n, 7);
    let mut y = vec![0.0; n];
    let st = unsafe { isam_k_forward(h.plan, x.as_ptr(), n, y.as_mut_ptr(), n) };
    assert_eq!(st, IsamStatus::Ok);

    let g = Arc::new(make_grid(NX, NZ, KMIN, KMAX, 2.0, 24).unwrap());
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    let eta = Array2::from_shape_vec((NX, NZ), x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()).unwrap();
    let want = k_forward(&SusceptibilityImage::new(g, eta).unwrap(), &plan).unwrap();
    for (pair, w) in y.chunks(2).zip(want.data().iter()) {
        assert_eq!(pair[0], w.re);
        assert_eq!(pair[1], w.im);
    }
}

#[test]
fn khat_adjoint_matches_library() {
    let h = handles();
    let n = 2 * NX * NZ;
    let s = pseudo_random(n, 11);
    let mut out = vec![0.0; n];
    let st = unsafe { isam_khat_adjoint(h.plan, h.disp, s.as_ptr(), n, out.as_mut_ptr(), n) };
    assert_eq!(st, IsamStatus::Ok);

    let g = Arc::new(make_grid(NX, NZ, KMIN, KMAX, 2.0, 24).unwrap());
    let plan = plan_nufft(g.clone(), 6, 2.0).unwrap();
    let d = DispersionModel::new(&g, 7.85, &[120.0, -10.0]).unwrap();
    let data = Array2::from_shape_vec((NX, NZ), s.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()).unwrap();
    let sc = isamfr::data::ComplexSpectra::new(g, isamfr::data::SpectralSpace::XK, data).unwrap();
    let want = khat_adjoint(&sc, &plan, &d).unwrap();
    for (pair, w) in out.chunks(2).zip(want.data().iter()) {
        assert_eq!((pair[0], pair[1]), (w.re, w.im));
    }
}

#[test]
fn dot_test_through_the_abi() {
    let h = handles();
    let n = 2 * NX * NZ;
    let x = pseudo_random(n, 1);
    let y = pseudo_random(n, 2);
    let mut kx = vec![0.0; n];
    let mut khy = vec![0.0; n];
    unsafe {
        assert_eq!(isam_khat_forward(h.plan, h.disp, x.as_ptr(), n, kx.as_mut_ptr(), n), IsamStatus::Ok);
        assert_eq!(isam_khat_adjoint(h.plan, h.disp, y.as_ptr(), n, khy.as_mut_ptr(), n), IsamStatus::Ok);
    }
    // <Kx, y> and <x, K^H y> as complex inner products
    let inner = |a: &[f64], b: &[f64]| {
        a.chunks(2)
            .zip(b.chunks(2))
            .map(|(p, q)| Complex64::new(p[0], p[1]) * Complex64::new(q[0], -q[1]))
            .sum::<Complex64>()
    };
    let lhs = inner(&kx, &y);
    let rhs = inner(&x, &khy);
    assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(rhs.norm()));
}

#[test]
fn reconstruct_ifft_of_zero_is_zero() {
    let h = handles();
    let s = vec![0.0; NX * NZ];
    let mut out = vec![1.0; 2 * NX * NZ];
    let mut iters = 99usize;
    let st = unsafe {
        isam_reconstruct(
            h.plan,
            ptr::null(),
            IsamMethod::Ifft,
            ptr::null(),
            s.as_ptr(),
            s.len(),
            out.as_mut_ptr(),
            out.len(),
            &mut iters,
        )
    };
    assert_eq!(st, IsamStatus::Ok);
    assert!(out.iter().all(|v| *v == 0.0));
    assert_eq!(iters, 0);
}

#[test]
fn reconstruct_mbir_reports_iterations() {
    let h = handles();
    let s = pseudo_random(NX * NZ, 5);
    let mut out = vec![0.0; 2 * NX * NZ];
    let mut iters = 0usize;
    let mut p = isam_recon_params_default();
    assert_eq!(p.lambda, 0.5);
    p.max_iters = 20;
    let st = unsafe {
        isam_reconstruct(
            h.plan,
            h.disp,
            IsamMethod::MbirPlus,
            &p,
            s.as_ptr(),
            s.len(),
            out.as_mut_ptr(),
            out.len(),
            &mut iters,
        )
    };
    assert_eq!(st, IsamStatus::Ok);
    assert!((1..=20).contains(&iters));
    assert!(out.iter().all(|v| v.is_finite()));
}

#[test]
fn errors_set_status_and_message() {
    let h = handles();
    let n = 2 * NX * NZ;
    let x = vec![0.0; n];
    let mut y = vec![0.0; n];
    unsafe {
        let st = isam_k_forward(h.plan, x.as_ptr(), n - 2, y.as_mut_ptr(), n);
        assert_eq!(st, IsamStatus::BufferSize);
        assert!(last_error().contains("input"));

        let st = isam_k_forward(ptr::null(), x.as_ptr(), n, y.as_mut_ptr(), n);
        assert_eq!(st, IsamStatus::NullPointer);
        assert!(last_error().contains("plan"));

        let mut bad = x.clone();
        bad[3] = f64::NAN;
        let st = isam_k_forward(h.plan, bad.as_ptr(), n, y.as_mut_ptr(), n);
        assert_eq!(st, IsamStatus::NonFinite);

        let mut g = ptr::null_mut();
        let st = isam_grid_new(4, 3, KMIN, KMAX, 2.0, 1, &mut g);
        assert_eq!(st, IsamStatus::InvalidArgument);
        assert!(g.is_null());

        let mut p = ptr::null_mut();
        let st = isam_plan_new(h.grid, 6, 1.1, &mut p);
        assert_eq!(st, IsamStatus::InvalidArgument);
        assert!(p.is_null());

        assert!(isam_plan_op_norm(ptr::null()).is_nan());
        let l = isam_plan_op_norm(h.plan);
        assert!(l > 0.5 && l < 2.0, "{l}");
    }
}

#[test]
fn evanescent_grid_is_reported() {
    let mut g = ptr::null_mut();
    let mut p = ptr::null_mut();
    unsafe {
        // pitch small enough that q_x exceeds 2 k_min
        assert_eq!(isam_grid_new(64, 32, KMIN, KMAX, 0.1, 16, &mut g), IsamStatus::Ok);
        assert_eq!(isam_plan_new(g, 6, 2.0, &mut p), IsamStatus::Evanescent);
        isam_grid_free(g);
    }
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("isamfr.h");
    let text = std::fs::read_to_string(&header).expect("generated header");
    for sym in [
        "isam_version",
        "isam_last_error",
        "isam_recon_params_default",
        "isam_grid_new",
        "isam_grid_free",
        "isam_plan_new",
        "isam_plan_free",
        "isam_plan_op_norm",
        "isam_dispersion_new",
        "isam_dispersion_free",
        "isam_k_forward",
        "isam_k_adjoint",
        "isam_khat_forward",
        "isam_khat_adjoint",
        "isam_reconstruct",
        "typedef struct IsamPlan IsamPlan",
        "ISAM_STATUS_OK = 0",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }

    // the header must also be valid C when a compiler is around
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
