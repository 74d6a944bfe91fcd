//! The ISAM forward model `K`, its adjoint, and the dispersion-corrected pair.
//!
//! For lateral frequency `q` and wavenumber `k` the object's axial frequency
//! is `κ = sqrt(k² - q²/4)`, i.e. half of `-β` with `β = -sqrt(4k² - q²)`.
//! `K` takes the lateral FFT of the image, evaluates each line's axial
//! spectrum at `κ`, applies the defocus phase `e^{-2j(k-κ)z_f}` and returns
//! to `x`. At `q = 0` this is exactly the axial FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{ComplexSpectra, DispersionModel, GridSpec, RealSpectra, SpectralSpace, SusceptibilityImage};
use crate::dispersion::{apply_phase_in_place, PhaseSign};
use crate::error::{Error, Result};
use crate::fft::{axial_to_depth, lateral_forward, lateral_inverse, UnitaryFft};
use crate::nufft::{Gridder, KaiserBessel, LineTable};

pub const DEFAULT_KERNEL_WIDTH: usize = 6;
pub const DEFAULT_OVERSAMPLING: f64 = 2.0;
const MIN_OVERSAMPLING: f64 = 1.25;
const POWER_ITERATIONS: usize = 50;
const POWER_SEED: u64 = 0x15a4_0b5e;

/// Stolt ordinate `β = -sqrt(4k² - q²)`.
pub fn stolt_beta(q_x: f64, k: f64) -> Result<f64> {
    let arg = 4.0 * k * k - q_x * q_x;
    if !(arg >= 0.0) {
        return Err(Error::Evanescent {
            q_x,
            limit: 2.0 * k,
        });
    }
    Ok(-arg.sqrt())
}

/// Precomputed resampling for one grid.
#[derive(Debug, Clone)]
pub struct NufftPlan {
    grid: Arc<GridSpec>,
    kernel_width: usize,
    oversampling: f64,
    beta_targets: Array2<f64>,
    gridder: Gridder,
    tables: Vec<LineTable>,
    focal: Array2<Complex64>,
    lateral: UnitaryFft,
    axial: UnitaryFft,
    op_norm: f64,
}

/// Builds a plan; fails on evanescent frequencies or too little oversampling.
pub fn plan_nufft(grid: Arc<GridSpec>, kernel_width: usize, oversampling: f64) -> Result<NufftPlan> {
    if !(oversampling.is_finite() && oversampling >= MIN_OVERSAMPLING) {
        return Err(Error::InvalidParameter(format!(
            "oversampling must be at least {MIN_OVERSAMPLING}, got {oversampling}"
        )));
    }
    if !(2..=16).contains(&kernel_width) || !kernel_width.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "kernel width must be an even number of taps in 2..=16, got {kernel_width}"
        )));
    }
    let q = grid.q_x();
    let k_min = grid.k_min();
    let worst = q.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if 4.0 * k_min * k_min <= worst * worst {
        return Err(Error::Evanescent {
            q_x: worst,
            limit: 2.0 * k_min,
        });
    }

    let (n_x, n_z) = grid.shape();
    let dk = grid.dk();
    let k = grid.k_grid();
    let d_f = grid.focal_z_index() as f64 - (n_z / 2) as f64;
    let gridder = Gridder::new(n_z, kernel_width, oversampling);
    let mut beta_targets = Array2::zeros((n_x, n_z));
    let mut focal = Array2::zeros((n_x, n_z));
    let mut tables = Vec::with_capacity(n_x);
    for (m, &qm) in q.iter().enumerate() {
        let mut u = Vec::with_capacity(n_z);
        for (i, &ki) in k.iter().enumerate() {
            let beta = stolt_beta(qm, ki)?;
            beta_targets[[m, i]] = beta;
            let kappa = -0.5 * beta;
            let ui = (kappa - k_min) / dk;
            u.push(ui);
            focal[[m, i]] = Complex64::from_polar(1.0, -2.0 * PI * (i as f64 - ui) * d_f / n_z as f64);
        }
        tables.push(gridder.table(&u));
    }

    let mut plan = NufftPlan {
        grid,
        kernel_width,
        oversampling,
        beta_targets,
        gridder,
        tables,
        focal,
        lateral: UnitaryFft::new(n_x),
        axial: UnitaryFft::new(n_z),
        op_norm: 0.0,
    };
    plan.op_norm = plan.power_iteration();
    Ok(plan)
}

impl NufftPlan {
    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel_width
    }

    pub fn oversampling(&self) -> f64 {
        self.oversampling
    }

    /// `β(q_x[m], k[i])` in rad/µm.
    pub fn beta_targets(&self) -> &Array2<f64> {
        &self.beta_targets
    }

    pub fn kernel(&self) -> KaiserBessel {
        self.gridder.kernel
    }

    /// Power-iteration estimate of `‖K‖₂`.
    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    /// Bound on the norm growth of `n` applications of `K^H K` to a unit image.
    pub fn growth_bound(&self, n: usize) -> f64 {
        (1.01 * self.op_norm).powi(2 * n as i32)
    }

    pub(crate) fn axial_fft(&self) -> &UnitaryFft {
        &self.axial
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        self.grid.check_shape(grid.shape())?;
        if *grid != *self.grid {
            return Err(Error::InvalidParameter(
                "array grid differs from the plan grid (wavenumbers, pitch or focus)".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn forward_array(&self, eta: &Array2<Complex64>) -> Array2<Complex64> {
        let a = lateral_forward(eta, &self.lateral);
        let mut out = Array2::zeros(a.dim());
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(a.axis_iter(Axis(0)))
            .enumerate()
            .for_each(|(m, (mut o, line))| {
                let mut work = vec![Complex64::new(0.0, 0.0); self.gridder.m];
                let line = line.to_vec();
                let o = o.as_slice_mut().expect("contiguous row");
                self.gridder.forward(&line, &self.tables[m], &mut work, o);
                for (v, f) in o.iter_mut().zip(self.focal.row(m)) {
                    *v *= f;
                }
            });
        lateral_inverse(&out, &self.lateral)
    }

    pub(crate) fn adjoint_array(&self, s: &Array2<Complex64>) -> Array2<Complex64> {
        let a = lateral_forward(s, &self.lateral);
        let mut out = Array2::zeros(a.dim());
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(a.axis_iter(Axis(0)))
            .enumerate()
            .for_each(|(m, (mut o, line))| {
                let mut work = vec![Complex64::new(0.0, 0.0); self.gridder.m];
                let y: Vec<Complex64> = line
                    .iter()
                    .zip(self.focal.row(m))
                    .map(|(v, f)| v * f.conj())
                    .collect();
                let o = o.as_slice_mut().expect("contiguous row");
                self.gridder.adjoint(&y, &self.tables[m], &mut work, o);
            });
        lateral_inverse(&out, &self.lateral)
    }

    fn power_iteration(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
        let mut x: Array2<Complex64> = Array2::from_shape_simple_fn(self.grid.shape(), || {
            Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let mut norm = frobenius(&x);
        x.mapv_inplace(|v| v / norm);
        for _ in 0..POWER_ITERATIONS {
            let y = self.adjoint_array(&self.forward_array(&x));
            norm = frobenius(&y);
            if norm == 0.0 {
                return 0.0;
            }
            x = y.mapv(|v| v / norm);
        }
        norm.sqrt()
    }
}

pub(crate) fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// `s_c = K η`.
pub fn k_forward(eta: &SusceptibilityImage, plan: &NufftPlan) -> Result<ComplexSpectra> {
    plan.check_grid(eta.grid())?;
    let data = plan.forward_array(eta.data());
    Ok(ComplexSpectra::from_parts(plan.grid.clone(), SpectralSpace::XK, data))
}

/// `η = K^H s`.
pub fn k_adjoint(s: &ComplexSpectra, plan: &NufftPlan) -> Result<SusceptibilityImage> {
    s.require_xk()?;
    plan.check_grid(s.grid())?;
    let data = plan.adjoint_array(s.data());
    Ok(SusceptibilityImage::from_parts(plan.grid.clone(), data))
}

/// `K̂ η = diag(e^{jφ}) K η`.
pub fn khat_forward(eta: &SusceptibilityImage, plan: &NufftPlan, d: &DispersionModel) -> Result<ComplexSpectra> {
    d.check_len(plan.grid.n_z())?;
    plan.check_grid(eta.grid())?;
    let mut data = plan.forward_array(eta.data());
    apply_phase_in_place(&mut data, d.phase(), PhaseSign::Apply);
    Ok(ComplexSpectra::from_parts(plan.grid.clone(), SpectralSpace::XK, data))
}

/// `K̂^H s = K^H diag(e^{-jφ}) s`.
pub fn khat_adjoint(s: &ComplexSpectra, plan: &NufftPlan, d: &DispersionModel) -> Result<SusceptibilityImage> {
    s.require_xk()?;
    d.check_len(plan.grid.n_z())?;
    plan.check_grid(s.grid())?;
    let mut data = s.data().as_standard_layout().into_owned();
    apply_phase_in_place(&mut data, d.phase(), PhaseSign::Compensate);
    Ok(SusceptibilityImage::from_parts(plan.grid.clone(), plan.adjoint_array(&data)))
}

/// Dispersion-compensated ISAM back-projection of a real measurement.
pub fn isam_reconstruct(s_d: &RealSpectra, plan: &NufftPlan, d: &DispersionModel) -> Result<SusceptibilityImage> {
    khat_adjoint(&s_d.to_complex(), plan, d)
}

/// Dispersion-compensated axial IFFT of every A-scan.
pub fn ifft_reconstruct(s_d: &RealSpectra, d: &DispersionModel) -> Result<SusceptibilityImage> {
    let grid = s_d.grid();
    d.check_len(grid.n_z())?;
    let mut data = s_d.data().mapv(|v| Complex64::new(v, 0.0));
    apply_phase_in_place(&mut data, d.phase(), PhaseSign::Compensate);
    let fft = UnitaryFft::new(grid.n_z());
    Ok(SusceptibilityImage::from_parts(grid.clone(), axial_to_depth(&data, &fft)))
}
