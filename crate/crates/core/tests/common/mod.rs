#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use isamfr::data::{make_grid, ComplexSpectra, GridSpec, RealSpectra, SpectralSpace, SusceptibilityImage};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const K_MIN: f64 = 2.0 * PI / 0.84;
pub const K_MAX: f64 = 2.0 * PI / 0.76;
pub const K_0: f64 = 2.0 * PI / 0.8;

pub fn grid(n_x: usize, n_z: usize, pitch: f64, focal: usize) -> Arc<GridSpec> {
    Arc::new(make_grid(n_x, n_z, K_MIN, K_MAX, pitch, focal).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(shape: (usize, usize), r: &mut ChaCha8Rng) -> Array2<Complex64> {
    Array2::from_shape_simple_fn(shape, || Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
}

pub fn random_image(g: &Arc<GridSpec>, r: &mut ChaCha8Rng) -> SusceptibilityImage {
    SusceptibilityImage::new(g.clone(), random_complex(g.shape(), r)).unwrap()
}

pub fn random_spectra(g: &Arc<GridSpec>, r: &mut ChaCha8Rng) -> ComplexSpectra {
    ComplexSpectra::new(g.clone(), SpectralSpace::XK, random_complex(g.shape(), r)).unwrap()
}

pub fn random_real(g: &Arc<GridSpec>, r: &mut ChaCha8Rng) -> RealSpectra {
    RealSpectra::new(g.clone(), Array2::from_shape_simple_fn(g.shape(), || r.random::<f64>() - 0.5)).unwrap()
}

/// `Σ a · conj(b)`
pub fn inner(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn norm(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_l2(a: &Array2<Complex64>, reference: &Array2<Complex64>) -> f64 {
    norm(&(a - reference)) / norm(reference)
}

/// The forward model by explicit exponential sums:
/// `s(x, k) = n_x^{-1} Σ_q e^{jqx} Σ_x' e^{-jqx'} n_z^{-1/2} Σ_z η(x', z)
///            · exp(-j[2(κ - k_min) z + 2(k - κ) z_f])`, with `κ = sqrt(k² - q²/4)`,
/// depth `z = (j - n_z/2) δz`, focus `z_f = (f - n_z/2) δz` and `δz = π / (n_z dk)`.
pub fn k_oracle(eta: &Array2<Complex64>, g: &GridSpec) -> Array2<Complex64> {
    let (n_x, n_z) = g.shape();
    let k = g.k_grid();
    let dk = (k[n_z - 1] - k[0]) / (n_z - 1) as f64;
    let dz = PI / (n_z as f64 * dk);
    let z_f = (g.focal_z_index() as f64 - (n_z / 2) as f64) * dz;
    let pitch = g.lateral_pitch();
    let q: Vec<f64> = (0..n_x)
        .map(|m| {
            let f = if m < n_x.div_ceil(2) { m as f64 } else { m as f64 - n_x as f64 };
            2.0 * PI * f / (n_x as f64 * pitch)
        })
        .collect();
    // lateral DFT of η
    let mut eq = Array2::<Complex64>::zeros((n_x, n_z));
    for (m, qm) in q.iter().enumerate() {
        for p in 0..n_x {
            let e = Complex64::from_polar(1.0, -qm * p as f64 * pitch);
            for j in 0..n_z {
                eq[[m, j]] += eta[[p, j]] * e;
            }
        }
    }
    let mut sq = Array2::<Complex64>::zeros((n_x, n_z));
    for (m, qm) in q.iter().enumerate() {
        for i in 0..n_z {
            let kappa = (k[i] * k[i] - qm * qm / 4.0).sqrt();
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n_z {
                let z = (j as f64 - (n_z / 2) as f64) * dz;
                acc += eq[[m, j]] * Complex64::from_polar(1.0, -2.0 * (kappa - k[0]) * z);
            }
            sq[[m, i]] = acc * Complex64::from_polar(1.0, -2.0 * (k[i] - kappa) * z_f) / (n_z as f64).sqrt();
        }
    }
    let mut out = Array2::<Complex64>::zeros((n_x, n_z));
    for p in 0..n_x {
        for (m, qm) in q.iter().enumerate() {
            let e = Complex64::from_polar(1.0, qm * p as f64 * pitch);
            for i in 0..n_z {
                out[[p, i]] += sq[[m, i]] * e;
            }
        }
    }
    out / n_x as f64
}

/// Naive axial DFT of one depth line: `n^{-1/2} Σ_j h[j] e^{-2πj i (j - n/2)/n}`.
pub fn axial_dft(h: &[Complex64]) -> Vec<Complex64> {
    let n = h.len();
    (0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * PI * ((i * (j + n - n / 2)) % n) as f64 / n as f64))
                .sum::<Complex64>()
                / (n as f64).sqrt()
        })
        .collect()
}

/// Naive inverse of [`axial_dft`].
pub fn axial_idft(s: &[Complex64]) -> Vec<Complex64> {
    let n = s.len();
    (0..n)
        .map(|j| {
            s.iter()
                .enumerate()
                .map(|(i, v)| v * Complex64::from_polar(1.0, 2.0 * PI * ((i * (j + n - n / 2)) % n) as f64 / n as f64))
                .sum::<Complex64>()
                / (n as f64).sqrt()
        })
        .collect()
}

/// Lateral profile through depth row `z`, taking the largest magnitude
/// within `±halo` rows at each position.
pub fn lateral_profile(img: &SusceptibilityImage, z: usize, halo: usize) -> Vec<f64> {
    let d = img.data();
    let (n_x, n_z) = d.dim();
    (0..n_x)
        .map(|x| {
            (z.saturating_sub(halo)..=(z + halo).min(n_z - 1))
                .map(|j| d[[x, j]].norm())
                .fold(0.0, f64::max)
        })
        .collect()
}
