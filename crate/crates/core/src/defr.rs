//! Greedy dispersion-encoded full-range recovery, one A-scan at a time.
//!
//! Each iteration compensates the residual, picks the strongest depth pixel
//! `p` at index `n` and removes its real-valued contribution
//! `2·Re(FFT(p·δ_n) ⊙ e^{jφ})` from the residual. The factor 2 means the
//! selected value is already the half-amplitude the real measurement implies.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::data::{ComplexSpectra, DispersionModel, RealSpectra, SpectralSpace, SusceptibilityImage};
use crate::dispersion::{phasors, PhaseSign};
use crate::error::{Error, Result};
use crate::fft::{axial_to_spectrum, UnitaryFft};
use crate::isam::{k_adjoint, NufftPlan};

pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_ENERGY_FLOOR: f64 = 1e-4;

/// Selected components, what is left of the measurement, and work done.
#[derive(Debug, Clone)]
pub struct DefrResult {
    pub z: SusceptibilityImage,
    pub residual_spectrum: RealSpectra,
    pub iterations_used: Vec<usize>,
}

/// Greedy state for a single A-scan.
pub struct DefrAscan<'a> {
    fft: &'a UnitaryFft,
    apply: &'a [Complex64],
    compensate: &'a [Complex64],
    residual: Vec<f64>,
    z: Vec<Complex64>,
    energy: f64,
    buf: Vec<Complex64>,
}

impl<'a> DefrAscan<'a> {
    pub fn new(
        spectrum: &[f64],
        fft: &'a UnitaryFft,
        apply: &'a [Complex64],
        compensate: &'a [Complex64],
    ) -> Self {
        let n = spectrum.len();
        DefrAscan {
            fft,
            apply,
            compensate,
            residual: spectrum.to_vec(),
            z: vec![Complex64::new(0.0, 0.0); n],
            energy: spectrum.iter().map(|v| v * v).sum(),
            buf: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn z(&self) -> &[Complex64] {
        &self.z
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn residual_energy(&self) -> f64 {
        self.energy
    }

    /// One greedy selection. Returns the chosen pixel, or `None` when the
    /// residual is zero or the atom would not reduce its energy.
    pub fn step(&mut self) -> Option<(usize, Complex64)> {
        for ((b, r), c) in self.buf.iter_mut().zip(&self.residual).zip(self.compensate) {
            *b = c * *r;
        }
        self.fft.spectrum_to_depth(&mut self.buf);
        let mut best = 0;
        let mut mag = -1.0;
        for (i, v) in self.buf.iter().enumerate() {
            let m = v.norm_sqr();
            if m > mag {
                mag = m;
                best = i;
            }
        }
        if mag <= 0.0 {
            return None;
        }
        let p = self.buf[best];
        self.buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        self.buf[best] = p;
        self.fft.depth_to_spectrum(&mut self.buf);
        let next: Vec<f64> = self
            .residual
            .iter()
            .zip(&self.buf)
            .zip(self.apply)
            .map(|((r, v), e)| r - 2.0 * (v * e).re)
            .collect();
        let energy: f64 = next.iter().map(|v| v * v).sum();
        if energy >= self.energy {
            // self-conjugate atom (zero delay or Nyquist without dispersion)
            return None;
        }
        self.residual = next;
        self.energy = energy;
        self.z[best] += p;
        Some((best, p))
    }

    /// Iterates until `max_iters` or the energy floor; returns iterations used.
    pub fn run(&mut self, max_iters: usize, energy_floor: f64) -> usize {
        let target = energy_floor * self.energy;
        let mut used = 0;
        while used < max_iters && self.energy > target {
            if self.step().is_none() {
                break;
            }
            used += 1;
        }
        used
    }
}

fn check_params(max_iters: usize, energy_floor: f64) -> Result<()> {
    if max_iters == 0 {
        return Err(Error::InvalidParameter("DEFR needs max_iters >= 1".into()));
    }
    if !(energy_floor.is_finite() && energy_floor >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "DEFR energy floor must be finite and nonnegative, got {energy_floor}"
        )));
    }
    Ok(())
}

/// Runs the greedy solver on every A-scan independently.
pub fn defr_solve(s_d: &RealSpectra, d: &DispersionModel, max_iters: usize, energy_floor: f64) -> Result<DefrResult> {
    check_params(max_iters, energy_floor)?;
    let grid = s_d.grid();
    d.check_len(grid.n_z())?;
    let fft = UnitaryFft::new(grid.n_z());
    let apply = phasors(d.phase(), PhaseSign::Apply);
    let compensate = phasors(d.phase(), PhaseSign::Compensate);

    let scans: Vec<(Vec<Complex64>, Vec<f64>, usize)> = s_d
        .data()
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let row = row.to_vec();
            let mut scan = DefrAscan::new(&row, &fft, &apply, &compensate);
            let used = scan.run(max_iters, energy_floor);
            (scan.z, scan.residual, used)
        })
        .collect();

    let shape = grid.shape();
    let mut z = Array2::zeros(shape);
    let mut residual = Array2::zeros(shape);
    let mut used = Vec::with_capacity(shape.0);
    for (x, (zs, rs, u)) in scans.into_iter().enumerate() {
        z.row_mut(x).assign(&ndarray::ArrayView1::from(&zs));
        residual.row_mut(x).assign(&ndarray::ArrayView1::from(&rs));
        used.push(u);
    }
    Ok(DefrResult {
        z: SusceptibilityImage::from_parts(Arc::clone(grid), z),
        residual_spectrum: RealSpectra::new(Arc::clone(grid), residual)?,
        iterations_used: used,
    })
}

/// The model's measurement for a set of components: `2·Re(FFT(z) ⊙ e^{jφ})`.
pub fn defr_model(z: &SusceptibilityImage, d: &DispersionModel) -> Result<RealSpectra> {
    let grid = z.grid();
    d.check_len(grid.n_z())?;
    let fft = UnitaryFft::new(grid.n_z());
    let spec = axial_to_spectrum(z.data(), &fft);
    let ph = phasors(d.phase(), PhaseSign::Apply);
    let mut out = Array2::zeros(grid.shape());
    for ((x, i), v) in spec.indexed_iter() {
        out[[x, i]] = 2.0 * (v * ph[i]).re;
    }
    RealSpectra::new(Arc::clone(grid), out)
}

fn compensated_residual(result: &DefrResult, d: &DispersionModel) -> Array2<Complex64> {
    let ph = phasors(d.phase(), PhaseSign::Compensate);
    let mut out = result.residual_spectrum.data().mapv(|v| Complex64::new(v, 0.0));
    for mut row in out.rows_mut() {
        row.iter_mut().zip(&ph).for_each(|(v, p)| *v *= p);
    }
    out
}

/// Components plus, optionally, the compensated residual in depth.
pub fn defr_image(result: &DefrResult, d: &DispersionModel, include_residual: bool) -> Result<SusceptibilityImage> {
    let grid = result.z.grid();
    d.check_len(grid.n_z())?;
    let mut img = result.z.data().clone();
    if include_residual {
        let fft = UnitaryFft::new(grid.n_z());
        let res = crate::fft::axial_to_depth(&compensated_residual(result, d), &fft);
        img += &res;
    }
    Ok(SusceptibilityImage::from_parts(Arc::clone(grid), img))
}

/// DEFR followed by ISAM back-projection of `FFT(z)` plus the compensated residual.
pub fn defr_isam(
    s_d: &RealSpectra,
    d: &DispersionModel,
    plan: &NufftPlan,
    max_iters: usize,
    energy_floor: f64,
) -> Result<SusceptibilityImage> {
    let result = defr_solve(s_d, d, max_iters, energy_floor)?;
    defr_isam_from(&result, d, plan)
}

/// ISAM back-projection of an existing DEFR decomposition.
pub fn defr_isam_from(result: &DefrResult, d: &DispersionModel, plan: &NufftPlan) -> Result<SusceptibilityImage> {
    let grid = result.z.grid();
    let mut spec = axial_to_spectrum(result.z.data(), plan.axial_fft());
    spec += &compensated_residual(result, d);
    k_adjoint(&ComplexSpectra::from_parts(Arc::clone(grid), SpectralSpace::XK, spec), plan)
}
