//! End-to-end scenarios, the method roster and the comparison bench.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{make_grid, DispersionModel, GridSpec, RealSpectra, SusceptibilityImage};
use crate::defr::{defr_image, defr_isam_from, defr_solve, DEFAULT_ENERGY_FLOOR, DEFAULT_MAX_ITERS};
use crate::error::{Error, Result};
use crate::isam::{ifft_reconstruct, isam_reconstruct, plan_nufft, NufftPlan, DEFAULT_KERNEL_WIDTH, DEFAULT_OVERSAMPLING};
use crate::mbir::{depth_weights, mbir_solve, MbirConfig, MbirTrace, ResidualBase};
use crate::metrics::{evaluate, EvalReport, DEFAULT_CEIL_DB, DEFAULT_FLOOR_DB};
use crate::synthesis::{phantom_image, simulate_measurement, synthesize_fullrange, FullRangeData, PhantomSource, PhantomSpec};

/// Reconstruction methods, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ifft")]
    Ifft,
    #[serde(rename = "isam")]
    Isam,
    #[serde(rename = "defr")]
    Defr,
    #[serde(rename = "defr-isam")]
    DefrIsam,
    #[serde(rename = "mbir")]
    Mbir,
    #[serde(rename = "mbir+")]
    MbirPlus,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ifft,
        Method::Isam,
        Method::Defr,
        Method::DefrIsam,
        Method::Mbir,
        Method::MbirPlus,
    ];

    /// Command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            Method::Ifft => "ifft",
            Method::Isam => "isam",
            Method::Defr => "defr",
            Method::DefrIsam => "defr-isam",
            Method::Mbir => "mbir",
            Method::MbirPlus => "mbir+",
        }
    }

    /// Row label in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Ifft => "direct",
            Method::Isam => "ISAM",
            Method::Defr => "DEFR",
            Method::DefrIsam => "DEFR+ISAM",
            Method::Mbir => "MBIR",
            Method::MbirPlus => "MBIR+",
        }
    }

    /// File-name friendly label.
    pub fn slug(self) -> &'static str {
        match self {
            Method::Ifft => "direct",
            Method::Isam => "isam",
            Method::Defr => "defr",
            Method::DefrIsam => "defr_isam",
            Method::Mbir => "mbir",
            Method::MbirPlus => "mbir_plus",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Every tunable of the six methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconParams {
    pub nufft_width: usize,
    pub nufft_oversample: f64,
    pub defr_iters: usize,
    pub defr_floor: f64,
    pub defr_residual: bool,
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub add_residual: bool,
    pub step_scale: f64,
    pub epsilon: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub residual_base: ResidualBase,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams {
            nufft_width: DEFAULT_KERNEL_WIDTH,
            nufft_oversample: DEFAULT_OVERSAMPLING,
            defr_iters: DEFAULT_MAX_ITERS,
            defr_floor: DEFAULT_ENERGY_FLOOR,
            defr_residual: true,
            lambda: 0.5,
            tol: 1e-3,
            max_iters: 500,
            add_residual: true,
            step_scale: 1.0,
            epsilon: 1e-12,
            w_min: 0.5,
            w_max: 1.0,
            residual_base: ResidualBase::Proximal,
        }
    }
}

impl ReconParams {
    /// MBIR settings; `weighted` selects the depth ramp.
    pub fn mbir_config(&self, grid: &GridSpec, weighted: bool) -> Result<MbirConfig> {
        let weights = if weighted {
            depth_weights(grid, self.w_min, self.w_max)?
        } else {
            crate::data::WeightVector::uniform(grid.n_z())
        };
        Ok(MbirConfig {
            lambda: self.lambda,
            weights,
            tol: self.tol,
            max_iters: self.max_iters,
            add_residual: self.add_residual,
            step_scale: self.step_scale,
            epsilon: self.epsilon,
            residual_base: self.residual_base,
        })
    }

    pub fn plan(&self, grid: Arc<GridSpec>) -> Result<NufftPlan> {
        plan_nufft(grid, self.nufft_width, self.nufft_oversample)
    }
}

/// A reconstructed image and, for MBIR, its iteration trace.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub method: Method,
    pub image: SusceptibilityImage,
    pub trace: Option<MbirTrace>,
}

/// Runs one method on a measurement.
pub fn reconstruct(
    method: Method,
    s_d: &RealSpectra,
    plan: &NufftPlan,
    d: &DispersionModel,
    p: &ReconParams,
) -> Result<Reconstruction> {
    let (image, trace) = match method {
        Method::Ifft => (ifft_reconstruct(s_d, d)?, None),
        Method::Isam => (isam_reconstruct(s_d, plan, d)?, None),
        Method::Defr => {
            let r = defr_solve(s_d, d, p.defr_iters, p.defr_floor)?;
            (defr_image(&r, d, p.defr_residual)?, None)
        }
        Method::DefrIsam => {
            let r = defr_solve(s_d, d, p.defr_iters, p.defr_floor)?;
            (defr_isam_from(&r, d, plan)?, None)
        }
        Method::Mbir | Method::MbirPlus => {
            let cfg = p.mbir_config(plan.grid(), method == Method::MbirPlus)?;
            let (img, trace) = mbir_solve(s_d, plan, d, &cfg)?;
            (img, Some(trace))
        }
    };
    Ok(Reconstruction { method, image, trace })
}

/// A synthetic half-range acquisition turned into full-range test data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub n_x: usize,
    pub n_z: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub lateral_pitch: f64,
    /// Focal index of the half-range acquisition.
    pub focal_z_index: usize,
    pub phantom: PhantomSource,
    /// Dispersion present in the half-range acquisition (removed first).
    pub system_coeffs: Vec<f64>,
    /// Centre wavenumber of both polynomials.
    pub k_0: f64,
    /// Encoding dispersion `a_2, a_3, …` of the full-range data.
    pub encode_coeffs: Vec<f64>,
    /// Pixels the content moves toward negative delay.
    pub delay_shift: isize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        let n_z = 256;
        Scenario {
            n_x: 128,
            n_z,
            k_min: 2.0 * std::f64::consts::PI / 0.84,
            k_max: 2.0 * std::f64::consts::PI / 0.76,
            lateral_pitch: 2.0,
            focal_z_index: 3 * n_z / 4,
            phantom: PhantomSource::Procedural {
                count: 80,
                amplitude_range: (0.05, 1.0),
                min_separation_px: 3.0,
                seed: 0,
                x_range: Some((8, 120)),
                z_range: Some((n_z / 2 + 8, n_z - 8)),
            },
            system_coeffs: vec![0.0],
            k_0: 2.0 * std::f64::consts::PI / 0.8,
            encode_coeffs: vec![150.0],
            delay_shift: (n_z / 4) as isize,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

/// Everything produced by [`Scenario::build`].
#[derive(Debug, Clone)]
pub struct ScenarioData {
    /// Phantom on the half-range grid.
    pub phantom: SusceptibilityImage,
    pub half_range: RealSpectra,
    pub full: FullRangeData,
    pub encode: DispersionModel,
}

impl Scenario {
    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(self.n_x, self.n_z, self.k_min, self.k_max, self.lateral_pitch, self.focal_z_index)
    }

    /// Replaces the phantom seed (procedural mode) and the noise seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let PhantomSource::Procedural { seed: s, .. } = &mut self.phantom {
            *s = seed;
        }
        self
    }

    pub fn build(&self, params: &ReconParams) -> Result<ScenarioData> {
        let grid = Arc::new(self.grid()?);
        let plan = params.plan(grid.clone())?;
        let spec = PhantomSpec {
            grid: (*grid).clone(),
            source: self.phantom.clone(),
        };
        let phantom = phantom_image(&spec)?;
        let system = DispersionModel::new(&grid, self.k_0, &self.system_coeffs)?;
        let half_range = simulate_measurement(&phantom, &plan, &system, self.noise_sigma, self.seed)?;
        let encode = DispersionModel::new(&grid, self.k_0, &self.encode_coeffs)?;
        let full = synthesize_fullrange(&half_range, &system, &encode, self.delay_shift, &plan)?;
        let encode = encode.on_grid(&full.grid)?;
        Ok(ScenarioData {
            phantom,
            half_range,
            full,
            encode,
        })
    }
}

/// All six methods on one dataset, scored against its ground truth.
#[derive(Debug, Clone)]
pub struct BenchResult {
    pub reports: Vec<EvalReport>,
    pub reconstructions: Vec<Reconstruction>,
}

pub fn bench(
    s_d: &RealSpectra,
    truth: &SusceptibilityImage,
    d: &DispersionModel,
    params: &ReconParams,
) -> Result<BenchResult> {
    let plan = params.plan(s_d.grid().clone())?;
    let mut reports = Vec::new();
    let mut reconstructions = Vec::new();
    for m in Method::ALL {
        let r = reconstruct(m, s_d, &plan, d, params)?;
        reports.push(evaluate(m.label(), &r.image, truth, DEFAULT_FLOOR_DB, DEFAULT_CEIL_DB)?);
        reconstructions.push(r);
    }
    Ok(BenchResult {
        reports,
        reconstructions,
    })
}
