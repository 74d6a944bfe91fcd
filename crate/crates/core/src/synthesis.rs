//! Phantoms, simulated measurements and pseudo-full-range test data.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ComplexSpectra, DispersionModel, GridSpec, RealSpectra, SpectralSpace, SusceptibilityImage};
use crate::dispersion::{apply_phase_in_place, encode_real_array, PhaseSign};
use crate::error::{Error, Result};
use crate::fft::{axial_to_depth, axial_to_spectrum, for_each_row, UnitaryFft};
use crate::isam::{k_adjoint, khat_forward, NufftPlan};

/// Energy fraction of the measurement a delay shift may push out of the image.
pub const SHIFT_LOSS_TOL: f64 = 1e-3;

/// A point scatterer; `z` is the optical delay in µm (0 at zero delay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub x: f64,
    pub z: f64,
    pub amplitude: Complex64,
}

/// Where phantom scatterers come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PhantomSource {
    List {
        scatterers: Vec<Scatterer>,
    },
    Procedural {
        count: usize,
        /// Magnitudes are uniform on this range; phases are uniform.
        amplitude_range: (f64, f64),
        min_separation_px: f64,
        seed: u64,
        /// Half-open lateral pixel range; whole width when absent.
        #[serde(default)]
        x_range: Option<(usize, usize)>,
        /// Half-open depth pixel range; whole depth when absent.
        #[serde(default)]
        z_range: Option<(usize, usize)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: GridSpec,
    pub source: PhantomSource,
}

fn pixel_of(grid: &GridSpec, sc: &Scatterer) -> Result<(usize, usize)> {
    let x = sc.x / grid.lateral_pitch();
    let z = sc.z / grid.depth_pixel() + grid.zero_delay_index() as f64;
    let (xi, zi) = (x.round(), z.round());
    if !(xi >= 0.0 && zi >= 0.0 && (xi as usize) < grid.n_x() && (zi as usize) < grid.n_z()) {
        return Err(Error::InvalidParameter(format!(
            "scatterer at ({} µm, {} µm) lies outside the grid",
            sc.x, sc.z
        )));
    }
    if !(sc.amplitude.re.is_finite() && sc.amplitude.im.is_finite()) {
        return Err(Error::NonFinite("scatterer amplitude".into()));
    }
    Ok((xi as usize, zi as usize))
}

fn check_range(r: Option<(usize, usize)>, n: usize, what: &str) -> Result<(usize, usize)> {
    let (a, b) = r.unwrap_or((0, n));
    if a >= b || b > n {
        return Err(Error::InvalidParameter(format!("{what} range {a}..{b} is empty or outside 0..{n}")));
    }
    Ok((a, b))
}

/// Single-pixel scatterers on the phantom's grid.
pub fn phantom_image(spec: &PhantomSpec) -> Result<SusceptibilityImage> {
    let grid = Arc::new(spec.grid.clone());
    let mut img = Array2::zeros(grid.shape());
    match &spec.source {
        PhantomSource::List { scatterers } => {
            for sc in scatterers {
                let (x, z) = pixel_of(&grid, sc)?;
                img[[x, z]] += sc.amplitude;
            }
        }
        PhantomSource::Procedural {
            count,
            amplitude_range,
            min_separation_px,
            seed,
            x_range,
            z_range,
        } => {
            let (lo, hi) = *amplitude_range;
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "amplitude range ({lo}, {hi}) must be positive and ordered"
                )));
            }
            if !(min_separation_px.is_finite() && *min_separation_px >= 0.0) {
                return Err(Error::InvalidParameter("min separation must be >= 0".into()));
            }
            let xr = check_range(*x_range, grid.n_x(), "lateral")?;
            let zr = check_range(*z_range, grid.n_z(), "depth")?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut placed: Vec<(usize, usize)> = Vec::with_capacity(*count);
            let budget = 1000 * count.max(&1);
            let sep2 = min_separation_px * min_separation_px;
            let mut attempts = 0;
            while placed.len() < *count && attempts < budget {
                attempts += 1;
                let x = rng.random_range(xr.0..xr.1);
                let z = rng.random_range(zr.0..zr.1);
                let clash = placed.iter().any(|&(px, pz)| {
                    let dx = px as f64 - x as f64;
                    let dz = pz as f64 - z as f64;
                    dx * dx + dz * dz < sep2.max(0.5)
                });
                if clash {
                    continue;
                }
                let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let phase = rng.random_range(0.0..2.0 * PI);
                img[[x, z]] = Complex64::from_polar(mag, phase);
                placed.push((x, z));
            }
            if placed.len() < *count {
                return Err(Error::PhantomPlacement {
                    requested: *count,
                    placed: placed.len(),
                });
            }
        }
    }
    Ok(SusceptibilityImage::from_parts(grid, img))
}

/// `Re(K̂η)` plus seeded Gaussian noise of std `noise_sigma · max|Re(K̂η)|`.
pub fn simulate_measurement(
    eta: &SusceptibilityImage,
    plan: &NufftPlan,
    d: &DispersionModel,
    noise_sigma: f64,
    seed: u64,
) -> Result<RealSpectra> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let sc = khat_forward(eta, plan, d)?;
    let mut data = sc.data().mapv(|v| v.re);
    if noise_sigma > 0.0 {
        let peak = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            let normal = Normal::new(0.0, noise_sigma * peak)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            data.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
    }
    RealSpectra::new(plan.grid().clone(), data)
}

/// Analytic-style spectrum whose depth profile has no negative-delay support.
pub fn hilbert_positive_delay(s: &RealSpectra) -> ComplexSpectra {
    let n = s.grid().n_z();
    let fft = UnitaryFft::new(n);
    let mut data = s.data().mapv(|v| Complex64::new(v, 0.0));
    for_each_row(&mut data, |_, row| {
        fft.inverse(row);
        // unshifted bins: 1..n/2 are positive delay, n/2+1.. negative
        for v in &mut row[1..n / 2] {
            *v *= 2.0;
        }
        for v in &mut row[n / 2 + 1..] {
            *v = Complex64::new(0.0, 0.0);
        }
        fft.forward(row);
    });
    ComplexSpectra::from_parts(s.grid().clone(), SpectralSpace::XK, data)
}

/// Moves depth content by `-shift` pixels, zero-filling; returns the result
/// and the fraction of energy that fell off the edge.
fn shift_depth(a: &Array2<Complex64>, shift: isize) -> (Array2<Complex64>, f64) {
    let n = a.len_of(Axis(1)) as isize;
    let mut out = Array2::zeros(a.dim());
    let total: f64 = a.iter().map(|v| v.norm_sqr()).sum();
    if shift.abs() >= n {
        return (out, if total > 0.0 { 1.0 } else { 0.0 });
    }
    if shift >= 0 {
        let sh = shift as usize;
        out.slice_mut(s![.., ..(n as usize - sh)]).assign(&a.slice(s![.., sh..]));
    } else {
        let sh = (-shift) as usize;
        out.slice_mut(s![.., sh..]).assign(&a.slice(s![.., ..(n as usize - sh)]));
    }
    let kept: f64 = out.iter().map(|v| v.norm_sqr()).sum();
    let lost = if total > 0.0 { (total - kept).max(0.0) / total } else { 0.0 };
    (out, lost)
}

/// Output of the pseudo-full-range protocol.
#[derive(Debug, Clone)]
pub struct FullRangeData {
    pub ground_truth: SusceptibilityImage,
    pub s_d: RealSpectra,
    /// Geometry after the shift (the focal index moves with the content).
    pub grid: Arc<GridSpec>,
}

/// Builds full-range data from a half-range acquisition: analytic signal,
/// compensation, half-scaled ISAM ground truth, a `delay_shift` pixel move
/// toward negative delay, re-encoding and taking the real part.
pub fn synthesize_fullrange(
    half_range: &RealSpectra,
    d_known: &DispersionModel,
    d_encode: &DispersionModel,
    delay_shift: isize,
    plan: &NufftPlan,
) -> Result<FullRangeData> {
    let grid = plan.grid().clone();
    if **half_range.grid() != *grid {
        return Err(Error::InvalidParameter("half-range data and plan grids differ".into()));
    }
    d_known.check_len(grid.n_z())?;
    d_encode.check_len(grid.n_z())?;

    let mut analytic = hilbert_positive_delay(half_range).into_data();
    apply_phase_in_place(&mut analytic, d_known.phase(), PhaseSign::Compensate);
    let analytic = ComplexSpectra::from_parts(grid.clone(), SpectralSpace::XK, analytic);
    let truth = k_adjoint(&analytic, plan)?.scaled(0.5);

    let fft = UnitaryFft::new(grid.n_z());
    let depth = axial_to_depth(analytic.data(), &fft);
    let (moved, lost) = shift_depth(&depth, delay_shift);
    // sinc sidelobes of off-grid content always lose a little; only the
    // data image is checked, the ground truth is truncated with it
    let (truth_moved, _) = shift_depth(truth.data(), delay_shift);
    if lost > SHIFT_LOSS_TOL {
        return Err(Error::ShiftOutOfBounds { shift: delay_shift });
    }
    let focal = grid.focal_z_index() as isize - delay_shift;
    if focal < 0 || focal >= grid.n_z() as isize {
        return Err(Error::ShiftOutOfBounds { shift: delay_shift });
    }
    let shifted_grid = Arc::new(grid.with_focal_index(focal as usize)?);

    let spectrum = axial_to_spectrum(&moved, &fft);
    let s_d = RealSpectra::new(shifted_grid.clone(), encode_real_array(&spectrum, d_encode.phase()))?;
    Ok(FullRangeData {
        ground_truth: SusceptibilityImage::from_parts(shifted_grid.clone(), truth_moved),
        s_d,
        grid: shifted_grid,
    })
}
