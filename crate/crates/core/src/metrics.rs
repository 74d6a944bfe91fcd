//! RMSE on complex images; PSNR and SSIM on 16-bit log-scaled magnitudes.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SusceptibilityImage;
use crate::error::{Error, Result};

pub const DEFAULT_FLOOR_DB: f64 = -60.0;
pub const DEFAULT_CEIL_DB: f64 = 0.0;
/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 120.0;

const PEAK: f64 = 65535.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Root mean squared complex difference.
pub fn rmse(a: &SusceptibilityImage, b: &SusceptibilityImage) -> Result<f64> {
    a.grid().check_shape(b.grid().shape())?;
    let n = a.data().len() as f64;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    Ok((sum / n).sqrt())
}

fn check_db(floor_db: f64, ceil_db: f64) -> Result<()> {
    if !(floor_db.is_finite() && ceil_db.is_finite() && floor_db < ceil_db) {
        return Err(Error::InvalidParameter(format!(
            "display window [{floor_db}, {ceil_db}] dB is empty"
        )));
    }
    Ok(())
}

/// Log magnitude relative to the image's own maximum, mapped to 0..=65535.
pub fn log_scale_16bit(img: &SusceptibilityImage, floor_db: f64, ceil_db: f64) -> Result<Array2<u16>> {
    let max = img.data().iter().fold(0.0f64, |m, v| m.max(v.norm()));
    log_scale_16bit_with_ref(img, max, floor_db, ceil_db)
}

/// Log magnitude relative to `reference_max`, so several images share one scale.
pub fn log_scale_16bit_with_ref(
    img: &SusceptibilityImage,
    reference_max: f64,
    floor_db: f64,
    ceil_db: f64,
) -> Result<Array2<u16>> {
    check_db(floor_db, ceil_db)?;
    if !(reference_max > 0.0 && reference_max.is_finite()) {
        return Err(Error::ZeroImage);
    }
    let span = ceil_db - floor_db;
    Ok(img.data().mapv(|v| {
        let db = 20.0 * (v.norm() / reference_max).log10();
        let db = if db.is_nan() { floor_db } else { db.clamp(floor_db, ceil_db) };
        ((db - floor_db) / span * PEAK).round_ties_even() as u16
    }))
}

fn check_pair(a: &Array2<u16>, b: &Array2<u16>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter("empty image".into()));
    }
    Ok(())
}

/// `10 log10(65535² / MSE)`, capped at 120 dB.
pub fn psnr(a: &Array2<u16>, b: &Array2<u16>) -> Result<f64> {
    check_pair(a, b)?;
    let mse = a
        .iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Separable valid-mode filtering with `g` along both axes.
fn filter_valid(a: &Array2<f64>, g: &[f64]) -> Array2<f64> {
    let w = g.len();
    let (r, c) = a.dim();
    let (vr, vc) = (r - w + 1, c - w + 1);
    let mut rows = Array2::zeros((r, vc));
    for i in 0..r {
        for j in 0..vc {
            let mut acc = 0.0;
            for (t, gt) in g.iter().enumerate() {
                acc += gt * a[[i, j + t]];
            }
            rows[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((vr, vc));
    for i in 0..vr {
        for j in 0..vc {
            let mut acc = 0.0;
            for (t, gt) in g.iter().enumerate() {
                acc += gt * rows[[i + t, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Mean SSIM over all valid 11×11 Gaussian window positions.
pub fn ssim(a: &Array2<u16>, b: &Array2<u16>) -> Result<f64> {
    check_pair(a, b)?;
    let (r, c) = a.dim();
    if r < SSIM_WINDOW || c < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {r}x{c}"
        )));
    }
    let c1 = (0.01 * PEAK).powi(2);
    let c2 = (0.03 * PEAK).powi(2);
    let g = gaussian_window();
    let af = a.mapv(|v| v as f64);
    let bf = b.mapv(|v| v as f64);
    let mu_a = filter_valid(&af, &g);
    let mu_b = filter_valid(&bf, &g);
    let aa = filter_valid(&(&af * &af), &g);
    let bb = filter_valid(&(&bf * &bf), &g);
    let ab = filter_valid(&(&af * &bf), &g);
    let mut total = 0.0;
    for ((((ma, mb), saa), sbb), sab) in mu_a.iter().zip(&mu_b).zip(&aa).zip(&bb).zip(&ab) {
        let va = saa - ma * ma;
        let vb = sbb - mb * mb;
        let cov = sab - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// One row of a method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub reference_max: f64,
    pub floor_db: f64,
    pub ceil_db: f64,
}

/// Scores `recon` against `truth`, scaling both by the truth's maximum.
pub fn evaluate(
    method: &str,
    recon: &SusceptibilityImage,
    truth: &SusceptibilityImage,
    floor_db: f64,
    ceil_db: f64,
) -> Result<EvalReport> {
    let reference_max = truth.data().iter().fold(0.0f64, |m, v| m.max(v.norm()));
    evaluate_with_ref(method, recon, truth, reference_max, floor_db, ceil_db)
}

/// As [`evaluate`] with an explicit magnitude for 0 dB.
pub fn evaluate_with_ref(
    method: &str,
    recon: &SusceptibilityImage,
    truth: &SusceptibilityImage,
    reference_max: f64,
    floor_db: f64,
    ceil_db: f64,
) -> Result<EvalReport> {
    let a = log_scale_16bit_with_ref(truth, reference_max, floor_db, ceil_db)?;
    let b = log_scale_16bit_with_ref(recon, reference_max, floor_db, ceil_db)?;
    Ok(EvalReport {
        method: method.to_string(),
        rmse: rmse(recon, truth)?,
        psnr: psnr(&a, &b)?,
        ssim: ssim(&a, &b)?,
        reference_max,
        floor_db,
        ceil_db,
    })
}

/// Full width at half maximum of a nonnegative profile, in samples, with
/// linear interpolation of the crossings. `None` if a side never drops
/// below half.
pub fn fwhm(profile: &[f64]) -> Option<f64> {
    let (peak, max) = profile
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    if !(max > 0.0) {
        return None;
    }
    let half = 0.5 * max;
    let mut left = None;
    for i in (0..peak).rev() {
        if profile[i] < half {
            let (a, b) = (profile[i], profile[i + 1]);
            left = Some(i as f64 + (half - a) / (b - a));
            break;
        }
    }
    let mut right = None;
    for i in peak + 1..profile.len() {
        if profile[i] < half {
            let (a, b) = (profile[i - 1], profile[i]);
            right = Some((i - 1) as f64 + (a - half) / (a - b));
            break;
        }
    }
    Some(right? - left?)
}
