//! Grids and arrays shared by every operator and solver.
//!
//! All two-dimensional arrays are `n_x × n_z`, row-major with the A-scan
//! index varying slowest. Spectra are indexed `(x, k)`; images are indexed
//! `(x, z)` with zero delay at depth index `n_z / 2`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on the spacing of the wavenumber grid.
const UNIFORMITY_TOL: f64 = 1e-9;

/// Acquisition geometry of one B-scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    n_x: usize,
    n_z: usize,
    k_grid: Vec<f64>,
    lateral_pitch: f64,
    focal_z_index: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    n_x: usize,
    n_z: usize,
    k_grid: Vec<f64>,
    lateral_pitch: f64,
    focal_z_index: usize,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        let grid = GridSpec {
            n_x: raw.n_x,
            n_z: raw.n_z,
            k_grid: raw.k_grid,
            lateral_pitch: raw.lateral_pitch,
            focal_z_index: raw.focal_z_index,
        };
        grid.validate()?;
        Ok(grid)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid {
            n_x: g.n_x,
            n_z: g.n_z,
            k_grid: g.k_grid,
            lateral_pitch: g.lateral_pitch,
            focal_z_index: g.focal_z_index,
        }
    }
}

/// Builds a grid with `n_z` uniformly spaced wavenumbers on `[k_min, k_max]`.
pub fn make_grid(
    n_x: usize,
    n_z: usize,
    k_min: f64,
    k_max: f64,
    lateral_pitch: f64,
    focal_z_index: usize,
) -> Result<GridSpec> {
    if n_x < 2 || n_z < 4 {
        return Err(Error::InvalidGrid(format!(
            "need n_x >= 2 and n_z >= 4, got {n_x} x {n_z}"
        )));
    }
    if !(k_min.is_finite() && k_max.is_finite()) || k_min <= 0.0 || k_min >= k_max {
        return Err(Error::InvalidGrid(format!(
            "wavenumber range [{k_min}, {k_max}] must be positive and increasing"
        )));
    }
    let step = (k_max - k_min) / (n_z - 1) as f64;
    let mut k_grid: Vec<f64> = (0..n_z).map(|i| k_min + i as f64 * step).collect();
    k_grid[n_z - 1] = k_max;
    let grid = GridSpec {
        n_x,
        n_z,
        k_grid,
        lateral_pitch,
        focal_z_index,
    };
    grid.validate()?;
    Ok(grid)
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.n_x < 2 || self.n_z < 4 {
            return Err(Error::InvalidGrid(format!(
                "need n_x >= 2 and n_z >= 4, got {} x {}",
                self.n_x, self.n_z
            )));
        }
        if self.k_grid.len() != self.n_z {
            return Err(Error::InvalidGrid(format!(
                "k_grid has {} samples, expected {}",
                self.k_grid.len(),
                self.n_z
            )));
        }
        if !(self.lateral_pitch.is_finite() && self.lateral_pitch > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "lateral pitch must be positive, got {}",
                self.lateral_pitch
            )));
        }
        if self.focal_z_index >= self.n_z {
            return Err(Error::InvalidGrid(format!(
                "focal index {} outside 0..{}",
                self.focal_z_index, self.n_z
            )));
        }
        if self.k_grid.iter().any(|k| !k.is_finite()) || self.k_grid[0] <= 0.0 {
            return Err(Error::InvalidGrid("wavenumbers must be finite and positive".into()));
        }
        let diffs: Vec<f64> = self.k_grid.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        if mean <= 0.0 || diffs.iter().any(|d| *d <= 0.0) {
            return Err(Error::InvalidGrid("k_grid must be strictly increasing".into()));
        }
        let worst = diffs.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max);
        if worst / mean >= UNIFORMITY_TOL {
            return Err(Error::InvalidGrid(format!(
                "k_grid is not uniform (relative spacing error {:.3e})",
                worst / mean
            )));
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_x, self.n_z)
    }

    pub fn k_grid(&self) -> &[f64] {
        &self.k_grid
    }

    pub fn k_min(&self) -> f64 {
        self.k_grid[0]
    }

    pub fn k_max(&self) -> f64 {
        self.k_grid[self.n_z - 1]
    }

    /// Wavenumber spacing in rad/µm.
    pub fn dk(&self) -> f64 {
        (self.k_max() - self.k_min()) / (self.n_z - 1) as f64
    }

    pub fn lateral_pitch(&self) -> f64 {
        self.lateral_pitch
    }

    pub fn focal_z_index(&self) -> usize {
        self.focal_z_index
    }

    /// Depth index of zero optical delay.
    pub fn zero_delay_index(&self) -> usize {
        self.n_z / 2
    }

    /// Axial pixel size in µm (one period of `exp(-2jkz)` spans `n_z` pixels).
    pub fn depth_pixel(&self) -> f64 {
        PI / (self.n_z as f64 * self.dk())
    }

    /// Transverse spatial frequencies in FFT order, rad/µm.
    pub fn q_x(&self) -> Vec<f64> {
        let n = self.n_x as isize;
        let span = self.n_x as f64 * self.lateral_pitch;
        (0..n)
            .map(|m| {
                let f = if m < (n + 1) / 2 { m } else { m - n };
                2.0 * PI * f as f64 / span
            })
            .collect()
    }

    /// Same geometry with a different focal plane.
    pub fn with_focal_index(&self, focal_z_index: usize) -> Result<GridSpec> {
        let mut g = self.clone();
        g.focal_z_index = focal_z_index;
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn check_shape(&self, got: (usize, usize)) -> Result<()> {
        if got != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got,
            });
        }
        Ok(())
    }
}

fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn check_finite_c<'a>(values: impl IntoIterator<Item = &'a Complex64>, what: &str) -> Result<()> {
    if values.into_iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Background-subtracted real interferogram, one spectrum per A-scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReal")]
pub struct RealSpectra {
    grid: Arc<GridSpec>,
    data: Array2<f64>,
}

#[derive(Deserialize)]
struct RawReal {
    grid: Arc<GridSpec>,
    data: Array2<f64>,
}

impl TryFrom<RawReal> for RealSpectra {
    type Error = Error;
    fn try_from(raw: RawReal) -> Result<Self> {
        RealSpectra::new(raw.grid, raw.data)
    }
}

impl RealSpectra {
    pub fn new(grid: Arc<GridSpec>, data: Array2<f64>) -> Result<Self> {
        grid.check_shape(data.dim())?;
        check_finite(data.iter(), "real spectra")?;
        Ok(RealSpectra { grid, data })
    }

    pub fn zeros(grid: Arc<GridSpec>) -> Self {
        let data = Array2::zeros(grid.shape());
        RealSpectra { grid, data }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Embeds the spectra as complex values with zero imaginary part.
    pub fn to_complex(&self) -> ComplexSpectra {
        ComplexSpectra {
            grid: self.grid.clone(),
            space: SpectralSpace::XK,
            data: self.data.mapv(|v| Complex64::new(v, 0.0)),
        }
    }
}

/// Which domain a complex spectrum lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralSpace {
    /// Lateral position × wavenumber.
    #[serde(rename = "x-k")]
    XK,
    /// Transverse frequency × wavenumber.
    #[serde(rename = "qx-k")]
    QxK,
}

/// Complex interferometric signal or an intermediate complex spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawComplex")]
pub struct ComplexSpectra {
    grid: Arc<GridSpec>,
    space: SpectralSpace,
    data: Array2<Complex64>,
}

#[derive(Deserialize)]
struct RawComplex {
    grid: Arc<GridSpec>,
    space: SpectralSpace,
    data: Array2<Complex64>,
}

impl TryFrom<RawComplex> for ComplexSpectra {
    type Error = Error;
    fn try_from(raw: RawComplex) -> Result<Self> {
        ComplexSpectra::new(raw.grid, raw.space, raw.data)
    }
}

impl ComplexSpectra {
    pub fn new(grid: Arc<GridSpec>, space: SpectralSpace, data: Array2<Complex64>) -> Result<Self> {
        grid.check_shape(data.dim())?;
        check_finite_c(data.iter(), "complex spectra")?;
        Ok(ComplexSpectra { grid, space, data })
    }

    pub(crate) fn from_parts(grid: Arc<GridSpec>, space: SpectralSpace, data: Array2<Complex64>) -> Self {
        debug_assert_eq!(grid.shape(), data.dim());
        ComplexSpectra { grid, space, data }
    }

    pub fn zeros(grid: Arc<GridSpec>) -> Self {
        let data = Array2::zeros(grid.shape());
        ComplexSpectra {
            grid,
            space: SpectralSpace::XK,
            data,
        }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn space(&self) -> SpectralSpace {
        self.space
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    pub(crate) fn require_xk(&self) -> Result<()> {
        if self.space != SpectralSpace::XK {
            return Err(Error::InvalidParameter(
                "operation expects a spectrum in x-k space".into(),
            ));
        }
        Ok(())
    }
}

/// Complex susceptibility on the full-range `(x, z)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawImage")]
pub struct SusceptibilityImage {
    grid: Arc<GridSpec>,
    data: Array2<Complex64>,
}

#[derive(Deserialize)]
struct RawImage {
    grid: Arc<GridSpec>,
    data: Array2<Complex64>,
}

impl TryFrom<RawImage> for SusceptibilityImage {
    type Error = Error;
    fn try_from(raw: RawImage) -> Result<Self> {
        SusceptibilityImage::new(raw.grid, raw.data)
    }
}

impl SusceptibilityImage {
    pub fn new(grid: Arc<GridSpec>, data: Array2<Complex64>) -> Result<Self> {
        grid.check_shape(data.dim())?;
        check_finite_c(data.iter(), "susceptibility image")?;
        Ok(SusceptibilityImage { grid, data })
    }

    pub(crate) fn from_parts(grid: Arc<GridSpec>, data: Array2<Complex64>) -> Self {
        debug_assert_eq!(grid.shape(), data.dim());
        SusceptibilityImage { grid, data }
    }

    pub fn zeros(grid: Arc<GridSpec>) -> Self {
        let data = Array2::zeros(grid.shape());
        SusceptibilityImage { grid, data }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    /// Euclidean norm over all pixels.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> SusceptibilityImage {
        SusceptibilityImage {
            grid: self.grid.clone(),
            data: self.data.mapv(|c| c * factor),
        }
    }
}

/// Dispersion phase polynomial `φ(k) = Σ_{p≥2} a_p (k - k_0)^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDispersion")]
pub struct DispersionModel {
    k_0: f64,
    /// `a_2, a_3, …` in rad·µm^p.
    coeffs: Vec<f64>,
    wavenumbers: Vec<f64>,
    phase: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDispersion {
    k_0: f64,
    coeffs: Vec<f64>,
    wavenumbers: Vec<f64>,
    phase: Vec<f64>,
}

/// Agreement required between a cached phase and its recomputation.
const PHASE_TOL: f64 = 1e-12;

impl TryFrom<RawDispersion> for DispersionModel {
    type Error = Error;
    fn try_from(raw: RawDispersion) -> Result<Self> {
        validate_coeffs(raw.k_0, &raw.coeffs)?;
        if raw.phase.len() != raw.wavenumbers.len() {
            return Err(Error::InvalidParameter(
                "dispersion phase and wavenumber lengths differ".into(),
            ));
        }
        for (k, p) in raw.wavenumbers.iter().zip(&raw.phase) {
            let fresh = evaluate_phase(raw.k_0, &raw.coeffs, *k);
            if !((fresh - p).abs() <= PHASE_TOL * fresh.abs().max(1.0)) {
                return Err(Error::InvalidParameter(format!(
                    "cached dispersion phase {p} disagrees with polynomial value {fresh}"
                )));
            }
        }
        Ok(DispersionModel {
            k_0: raw.k_0,
            coeffs: raw.coeffs,
            wavenumbers: raw.wavenumbers,
            phase: raw.phase,
        })
    }
}

/// Highest supported polynomial order.
pub const MAX_DISPERSION_ORDER: usize = 5;

fn validate_coeffs(k_0: f64, coeffs: &[f64]) -> Result<()> {
    if !k_0.is_finite() {
        return Err(Error::NonFinite("dispersion centre wavenumber".into()));
    }
    if coeffs.is_empty() || coeffs.len() + 1 > MAX_DISPERSION_ORDER {
        return Err(Error::InvalidParameter(format!(
            "dispersion needs 1..={} coefficients (a_2..a_{}), got {}",
            MAX_DISPERSION_ORDER - 1,
            MAX_DISPERSION_ORDER,
            coeffs.len()
        )));
    }
    if coeffs.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("dispersion coefficients".into()));
    }
    Ok(())
}

pub(crate) fn evaluate_phase(k_0: f64, coeffs: &[f64], k: f64) -> f64 {
    let dk = k - k_0;
    // Horner on a_2 + a_3 dk + ..., then scale by dk^2
    let poly = coeffs.iter().rev().fold(0.0, |acc, a| acc * dk + a);
    poly * dk * dk
}

impl DispersionModel {
    /// Materialises the phase polynomial on the grid's wavenumbers.
    pub fn new(grid: &GridSpec, k_0: f64, coeffs: &[f64]) -> Result<Self> {
        validate_coeffs(k_0, coeffs)?;
        let phase = grid
            .k_grid()
            .iter()
            .map(|&k| evaluate_phase(k_0, coeffs, k))
            .collect();
        Ok(DispersionModel {
            k_0,
            coeffs: coeffs.to_vec(),
            wavenumbers: grid.k_grid().to_vec(),
            phase,
        })
    }

    /// Zero dispersion centred on the middle of the band.
    pub fn none(grid: &GridSpec) -> Self {
        let k_0 = 0.5 * (grid.k_min() + grid.k_max());
        DispersionModel {
            k_0,
            coeffs: vec![0.0],
            wavenumbers: grid.k_grid().to_vec(),
            phase: vec![0.0; grid.n_z()],
        }
    }

    pub fn k_0(&self) -> f64 {
        self.k_0
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Polynomial order `N_p`.
    pub fn order(&self) -> usize {
        self.coeffs.len() + 1
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn is_zero(&self) -> bool {
        self.phase.iter().all(|p| *p == 0.0)
    }

    /// Same coefficients re-evaluated on another grid.
    pub fn on_grid(&self, grid: &GridSpec) -> Result<Self> {
        DispersionModel::new(grid, self.k_0, &self.coeffs)
    }

    pub(crate) fn check_len(&self, n_z: usize) -> Result<()> {
        if self.phase.len() != n_z {
            return Err(Error::InvalidParameter(format!(
                "dispersion phase has {} samples, grid has {}",
                self.phase.len(),
                n_z
            )));
        }
        Ok(())
    }
}

/// Per-depth ℓ1 weights, broadcast across A-scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        WeightVector::new(w)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(WeightVector(w))
    }

    pub fn uniform(n_z: usize) -> Self {
        WeightVector(vec![1.0; n_z])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_valid() {
        let pitch = 2000.0 / 1024.0;
        let g = make_grid(1024, 2048, 7.48, 8.27, pitch, 1024).unwrap();
        assert_eq!(g.shape(), (1024, 2048));
        assert!((g.lateral_pitch() - 1.953125).abs() < 1e-12);
    }

    #[test]
    fn tiny_grid_linspace() {
        let g = make_grid(2, 4, 7.0, 8.0, 1.0, 2).unwrap();
        let expect = [7.0, 7.0 + 1.0 / 3.0, 7.0 + 2.0 / 3.0, 8.0];
        for (a, b) in g.k_grid().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_grid(2, 4, 8.0, 7.0, 1.0, 2).is_err());
        assert!(make_grid(1, 4, 7.0, 8.0, 1.0, 2).is_err());
        assert!(make_grid(2, 3, 7.0, 8.0, 1.0, 2).is_err());
        assert!(make_grid(2, 4, 7.0, 8.0, 1.0, 4).is_err());
        assert!(make_grid(2, 4, 7.0, 8.0, 0.0, 2).is_err());
    }

    #[test]
    fn deserialization_checks_uniformity() {
        let g = make_grid(2, 4, 7.0, 8.0, 1.0, 2).unwrap();
        let mut v = serde_json::to_value(&g).unwrap();
        v["k_grid"][1] = serde_json::json!(7.5);
        assert!(serde_json::from_value::<GridSpec>(v).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = Arc::new(make_grid(2, 4, 7.0, 8.0, 1.0, 2).unwrap());
        assert!(RealSpectra::new(g.clone(), Array2::zeros((2, 5))).is_err());
        let mut bad = Array2::zeros((2, 4));
        bad[[0, 0]] = f64::NAN;
        assert!(RealSpectra::new(g, bad).is_err());
    }

    #[test]
    fn q_axis_is_fft_ordered() {
        let g = make_grid(4, 4, 7.0, 8.0, 0.5, 2).unwrap();
        let q = g.q_x();
        let base = 2.0 * PI / 2.0;
        assert_eq!(q, vec![0.0, base, -2.0 * base, -base]);
    }

    #[test]
    fn dispersion_order_limits() {
        let g = make_grid(2, 4, 7.0, 8.0, 1.0, 2).unwrap();
        assert!(DispersionModel::new(&g, 7.5, &[]).is_err());
        assert!(DispersionModel::new(&g, 7.5, &[1.0, 2.0, 3.0, 4.0]).is_ok());
        assert!(DispersionModel::new(&g, 7.5, &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
        assert!(DispersionModel::new(&g, 7.5, &[f64::NAN]).is_err());
    }

    #[test]
    fn weights_reject_negative() {
        assert!(WeightVector::new(vec![1.0, -0.1]).is_err());
        assert_eq!(WeightVector::uniform(3).as_slice(), &[1.0, 1.0, 1.0]);
    }
}
