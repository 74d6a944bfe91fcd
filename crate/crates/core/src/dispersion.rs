//! Dispersion phase handling and autofocus.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ComplexSpectra, DispersionModel, GridSpec, RealSpectra, SpectralSpace};
use crate::error::{Error, Result};
use crate::fft::{for_each_row, UnitaryFft};

/// Direction of a dispersion phase multiplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseSign {
    /// Multiply by `e^{+jφ}` (encode).
    Apply,
    /// Multiply by `e^{-jφ}` (compensate).
    Compensate,
}

impl PhaseSign {
    fn factor(self) -> f64 {
        match self {
            PhaseSign::Apply => 1.0,
            PhaseSign::Compensate => -1.0,
        }
    }
}

/// Builds the dispersion model for `a_2..a_{N_p}` on `grid`.
pub fn dispersion_phase(grid: &GridSpec, k_0: f64, coeffs: &[f64]) -> Result<DispersionModel> {
    DispersionModel::new(grid, k_0, coeffs)
}

pub(crate) fn phasors(phase: &[f64], sign: PhaseSign) -> Vec<Complex64> {
    let s = sign.factor();
    phase
        .iter()
        .map(|p| Complex64::from_polar(1.0, s * p))
        .collect()
}

/// Multiplies every row of `data` elementwise by `e^{±jφ}` in place.
pub(crate) fn apply_phase_in_place(data: &mut Array2<Complex64>, phase: &[f64], sign: PhaseSign) {
    if phase.iter().all(|p| *p == 0.0) {
        return;
    }
    let ph = phasors(phase, sign);
    for_each_row(data, |_, row| {
        row.iter_mut().zip(&ph).for_each(|(v, p)| *v *= p);
    });
}

/// Multiplies each A-scan of an `x-k` spectrum by `e^{±jφ(k)}`.
pub fn apply_phase(sc: &ComplexSpectra, d: &DispersionModel, sign: PhaseSign) -> Result<ComplexSpectra> {
    sc.require_xk()?;
    d.check_len(sc.grid().n_z())?;
    let mut data = sc.data().as_standard_layout().into_owned();
    apply_phase_in_place(&mut data, d.phase(), sign);
    Ok(ComplexSpectra::from_parts(sc.grid().clone(), SpectralSpace::XK, data))
}

/// Real part of the dispersed complex spectrum, `Re(s_c ⊙ e^{jφ})`.
pub fn encode_real(sc: &ComplexSpectra, d: &DispersionModel) -> Result<RealSpectra> {
    sc.require_xk()?;
    d.check_len(sc.grid().n_z())?;
    let data = encode_real_array(sc.data(), d.phase());
    RealSpectra::new(sc.grid().clone(), data)
}

pub(crate) fn encode_real_array(data: &Array2<Complex64>, phase: &[f64]) -> Array2<f64> {
    let ph = phasors(phase, PhaseSign::Apply);
    let mut out = Array2::zeros(data.dim());
    ndarray::Zip::from(out.rows_mut())
        .and(data.rows())
        .par_for_each(|mut o, row| {
            for ((o, v), p) in o.iter_mut().zip(row.iter()).zip(&ph) {
                *o = (v * p).re;
            }
        });
    out
}

/// Search box and budget for [`autofocus`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutofocusSearch {
    pub a2_range: (f64, f64),
    pub a3_range: (f64, f64),
    /// Coarse samples per axis.
    pub grid_points: usize,
    /// Simplex refinement budget.
    pub refine_iters: usize,
}

impl AutofocusSearch {
    pub fn new(a2_range: (f64, f64), a3_range: (f64, f64)) -> Self {
        AutofocusSearch {
            a2_range,
            a3_range,
            grid_points: 21,
            refine_iters: 200,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.a2_range;
        let (c, d) = self.a3_range;
        if ![a, b, c, d].iter().all(|v| v.is_finite()) || a > b || c > d {
            return Err(Error::InvalidParameter(
                "autofocus ranges must be finite and ordered".into(),
            ));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter(
                "autofocus needs at least 2 grid points per axis".into(),
            ));
        }
        Ok(())
    }

    fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0].clamp(self.a2_range.0, self.a2_range.1),
            p[1].clamp(self.a3_range.0, self.a3_range.1),
        ]
    }
}

/// Outcome of an autofocus search.
#[derive(Debug, Clone)]
pub struct AutofocusResult {
    pub model: DispersionModel,
    /// Entropy at the returned coefficients.
    pub cost: f64,
    /// Whether the simplex met the relative decrease floor within budget.
    pub converged: bool,
    pub iterations: usize,
    /// `(a_2, a_3, entropy)` for every coarse grid point.
    pub coarse: Vec<(f64, f64, f64)>,
}

/// Relative cost spread under which the simplex is considered converged.
const REFINE_FLOOR: f64 = 1e-6;

/// Shannon entropy of the normalised intensity of the compensated image.
pub fn entropy_cost(s_d: &RealSpectra, k_0: f64, a2: f64, a3: f64) -> Result<f64> {
    let fft = UnitaryFft::new(s_d.grid().n_z());
    Ok(entropy_with(s_d, &fft, k_0, [a2, a3]))
}

fn entropy_with(s_d: &RealSpectra, fft: &UnitaryFft, k_0: f64, a: [f64; 2]) -> f64 {
    let grid = s_d.grid();
    let phase: Vec<f64> = grid
        .k_grid()
        .iter()
        .map(|&k| crate::data::evaluate_phase(k_0, &a, k))
        .collect();
    let ph = phasors(&phase, PhaseSign::Compensate);
    let n_z = grid.n_z();
    let mut buf = vec![Complex64::new(0.0, 0.0); n_z];
    let mut intensity = Vec::with_capacity(grid.n_x() * n_z);
    for row in s_d.data().rows() {
        for ((b, v), p) in buf.iter_mut().zip(row.iter()).zip(&ph) {
            *b = p * *v;
        }
        fft.spectrum_to_depth(&mut buf);
        intensity.extend(buf.iter().map(|c| c.norm_sqr()));
    }
    let total: f64 = intensity.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    intensity
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| {
            let p = v / total;
            -p * p.ln()
        })
        .sum()
}

/// Estimates `(a_2, a_3)` by minimising image entropy: a coarse grid search
/// followed by Nelder–Mead refinement clamped to the search box.
///
/// Real-valued data cannot distinguish `a` from `-a` (the mirror term is
/// focused instead of the object), so the search box should not contain
/// both signs of a strong `a_2`.
pub fn autofocus(s_d: &RealSpectra, k_0: f64, search: &AutofocusSearch) -> Result<AutofocusResult> {
    search.validate()?;
    if !k_0.is_finite() {
        return Err(Error::NonFinite("autofocus centre wavenumber".into()));
    }
    let fft = UnitaryFft::new(s_d.grid().n_z());
    let a2s = AutofocusSearch::axis(search.a2_range, search.grid_points);
    let a3s = AutofocusSearch::axis(search.a3_range, search.grid_points);
    let points: Vec<(f64, f64)> = a2s
        .iter()
        .flat_map(|&a2| a3s.iter().map(move |&a3| (a2, a3)))
        .collect();
    let coarse: Vec<(f64, f64, f64)> = points
        .par_iter()
        .map(|&(a2, a3)| (a2, a3, entropy_with(s_d, &fft, k_0, [a2, a3])))
        .collect();
    let best = coarse
        .iter()
        .copied()
        .fold((0.0, 0.0, f64::INFINITY), |acc, c| if c.2 < acc.2 { c } else { acc });

    let cost = |p: [f64; 2]| entropy_with(s_d, &fft, k_0, search.clamp(p));
    let h2 = (a2s.get(1).copied().unwrap_or(0.0) - a2s[0]).abs().max(1e-9);
    let h3 = (a3s.get(1).copied().unwrap_or(0.0) - a3s[0]).abs().max(1e-9);
    let start = [best.0, best.1];
    let (point, value, iterations, converged) =
        nelder_mead(&cost, start, best.2, [h2, h3], search.refine_iters, search);

    let point = search.clamp(point);
    let model = DispersionModel::new(s_d.grid(), k_0, &point)?;
    Ok(AutofocusResult {
        model,
        cost: value,
        converged,
        iterations,
        coarse,
    })
}

fn nelder_mead(
    cost: &impl Fn([f64; 2]) -> f64,
    start: [f64; 2],
    start_cost: f64,
    step: [f64; 2],
    max_iters: usize,
    search: &AutofocusSearch,
) -> ([f64; 2], f64, usize, bool) {
    let toward_inside = |p: [f64; 2], i: usize, h: f64| -> [f64; 2] {
        let mut q = p;
        q[i] += h;
        let c = search.clamp(q);
        if c[i] == p[i] {
            q[i] = p[i] - h;
        }
        search.clamp(q)
    };
    let mut simplex: Vec<([f64; 2], f64)> = vec![(start, start_cost)];
    for (i, h) in step.iter().enumerate() {
        let p = toward_inside(start, i, *h);
        simplex.push((p, cost(p)));
    }

    let mut iters = 0;
    let mut converged = false;
    while iters < max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[2].1);
        if (worst - best).abs() <= REFINE_FLOOR * best.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        iters += 1;
        let centroid = [
            0.5 * (simplex[0].0[0] + simplex[1].0[0]),
            0.5 * (simplex[0].0[1] + simplex[1].0[1]),
        ];
        let along = |t: f64| {
            search.clamp([
                centroid[0] + t * (simplex[2].0[0] - centroid[0]),
                centroid[1] + t * (simplex[2].0[1] - centroid[1]),
            ])
        };
        let reflected = along(-1.0);
        let fr = cost(reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = cost(expanded);
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[2].1 { along(-0.5) } else { along(0.5) };
            let fc = cost(contracted);
            if fc < simplex[2].1.min(fr) {
                simplex[2] = (contracted, fc);
            } else {
                let anchor = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let p = [
                        anchor[0] + 0.5 * (v.0[0] - anchor[0]),
                        anchor[1] + 0.5 * (v.0[1] - anchor[1]),
                    ];
                    *v = (p, cost(p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, iters, converged)
}

/// Compensated complex spectrum `s ⊙ e^{-jφ}` of a real measurement.
pub fn compensate_real(s_d: &RealSpectra, d: &DispersionModel) -> Result<ComplexSpectra> {
    d.check_len(s_d.grid().n_z())?;
    let mut data = s_d.data().mapv(|v| Complex64::new(v, 0.0));
    apply_phase_in_place(&mut data, d.phase(), PhaseSign::Compensate);
    Ok(ComplexSpectra::from_parts(Arc::clone(s_d.grid()), SpectralSpace::XK, data))
}
