//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad configuration or arguments, 3 unreadable
//! input, 4 non-finite solver state, 5 unconverged autofocus (output is still
//! written), 1 anything else (for example an unwritable output).
//!
//! A `--config` file is JSON in the same style as the sidecar headers. All of
//! its sections are optional:
//! `{"scenario": {..}, "recon": {..}, "dispersion": {"k_0": .., "coeffs": [..]},
//! "autofocus": {..}, "floor_db": -60, "ceil_db": 0}`.
//! A command-line flag beats the config file, which beats the built-in default.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{DispersionModel, GridSpec, RealSpectra};
use crate::dispersion::{autofocus, AutofocusResult, AutofocusSearch};
use crate::error::Error;
use crate::io::{
    read_image, read_real, sidecar_paths, write_atomic, write_csv, write_image, write_png16, write_real,
    DispersionHeader,
};
use crate::metrics::{evaluate_with_ref, log_scale_16bit_with_ref, DEFAULT_CEIL_DB, DEFAULT_FLOOR_DB};
use crate::pipeline::{bench, reconstruct, Method, ReconParams, Scenario};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_NON_FINITE: u8 = 4;
pub const EXIT_AUTOFOCUS: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "isamfr", version, about = "Full-range ISAM reconstruction for dispersion-encoded SD-OCT")]
pub struct Cli {
    /// Print progress and solver diagnostics to stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a phantom and write its ground truth and full-range spectra.
    Synth(SynthArgs),
    /// Reconstruct an image from real spectra.
    Reconstruct(ReconstructArgs),
    /// Estimate dispersion coefficients by entropy minimisation.
    Autofocus(AutofocusArgs),
    /// Score an image against a reference.
    Compare(CompareArgs),
    /// Run all six methods on a seeded phantom and tabulate the scores.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground-truth image (sidecar base name).
    #[arg(long)]
    pub truth: PathBuf,
    /// Full-range real spectra (sidecar base name).
    #[arg(long)]
    pub spectra: PathBuf,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub delay_shift: Option<isize>,
    #[arg(long)]
    pub a2: Option<f64>,
    #[arg(long)]
    pub a3: Option<f64>,
    #[arg(long)]
    pub k0: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct RangeArgs {
    #[arg(long)]
    pub a2_min: Option<f64>,
    #[arg(long)]
    pub a2_max: Option<f64>,
    #[arg(long)]
    pub a3_min: Option<f64>,
    #[arg(long)]
    pub a3_max: Option<f64>,
    /// Coarse samples per axis.
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub refine_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub nufft_width: Option<usize>,
    #[arg(long)]
    pub nufft_oversample: Option<f64>,
    #[arg(long)]
    pub defr_iters: Option<usize>,
    #[arg(long)]
    pub defr_floor: Option<f64>,
    /// DEFR image without the compensated residual.
    #[arg(long)]
    pub no_residual: bool,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Skip re-adding the back-projected residual to the MBIR output.
    #[arg(long)]
    pub no_add_residual: bool,
    #[arg(long)]
    pub w_min: Option<f64>,
    #[arg(long)]
    pub w_max: Option<f64>,
    #[arg(long)]
    pub a2: Option<f64>,
    #[arg(long)]
    pub a3: Option<f64>,
    #[arg(long)]
    pub k0: Option<f64>,
    /// Estimate the dispersion first instead of using the header or flags.
    #[arg(long)]
    pub autofocus: bool,
    #[command(flatten)]
    pub range: RangeArgs,
    /// 16-bit log-magnitude PNG of the result.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// MBIR iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AutofocusArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// JSON file receiving `{k_0, coeffs, cost, converged, iterations}`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k0: Option<f64>,
    #[command(flatten)]
    pub range: RangeArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Image under test.
    #[arg(long)]
    pub input: PathBuf,
    /// Ground-truth image.
    #[arg(long)]
    pub reference: PathBuf,
    /// CSV receiving one report row.
    #[arg(long)]
    pub output: PathBuf,
    /// Magnitude mapped to the top of the display window; defaults to the reference maximum.
    #[arg(long)]
    pub scale_max: Option<f64>,
    #[arg(long, default_value = "image")]
    pub label: String,
    #[arg(long, allow_negative_numbers = true)]
    pub floor_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub ceil_db: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// PNG of the scaled input image.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// PNG of the scaled reference image.
    #[arg(long)]
    pub reference_png: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving `bench.csv` and one PNG per method.
    #[arg(long)]
    pub output: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Scenario,
    pub recon: ReconParams,
    pub dispersion: Option<DispersionHeader>,
    pub autofocus: Option<AutofocusSearch>,
    pub floor_db: f64,
    pub ceil_db: f64,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            scenario: Scenario::default(),
            recon: ReconParams::default(),
            dispersion: None,
            autofocus: None,
            floor_db: DEFAULT_FLOOR_DB,
            ceil_db: DEFAULT_CEIL_DB,
        }
    }
}

/// Default autofocus box: positive a_2 only, since the sign is not observable.
pub fn default_search() -> AutofocusSearch {
    AutofocusSearch::new((0.0, 400.0), (-400.0, 400.0))
}

/// A failed run: exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_CONFIG, e.to_string())
    }

    fn input(e: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_INPUT, e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonFinite(_) | Error::SolverDiverged { .. } => EXIT_NON_FINITE,
            Error::InvalidGrid(_)
            | Error::InvalidParameter(_)
            | Error::ShapeMismatch { .. }
            | Error::Evanescent { .. }
            | Error::ShiftOutOfBounds { .. }
            | Error::PhantomPlacement { .. }
            | Error::ZeroImage => EXIT_CONFIG,
            Error::Header { .. } => EXIT_INPUT,
            Error::Io { .. } | Error::Json(_) | Error::Image(_) | Error::Csv(_) => EXIT_FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first) and runs; prints errors to stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Runs a parsed command; `Ok` carries 0 or the unconverged-autofocus code.
pub fn run(cli: &Cli) -> CliResult<u8> {
    let v = cli.verbose > 0;
    match &cli.command {
        Command::Synth(a) => synth(a, v),
        Command::Reconstruct(a) => reconstruct_cmd(a, v),
        Command::Autofocus(a) => autofocus_cmd(a, v),
        Command::Compare(a) => compare(a),
        Command::Bench(a) => bench_cmd(a, v),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn distinct(input: &Path, output: &Path) -> CliResult<()> {
    if sidecar_paths(input) == sidecar_paths(output) {
        return Err(Failure::config(format!(
            "input and output both name {}",
            input.display()
        )));
    }
    Ok(())
}

fn read_spectra(path: &Path) -> CliResult<(RealSpectra, Option<DispersionModel>)> {
    read_real(path).map_err(Failure::input)
}

/// Flags over config over the header's own polynomial over no dispersion.
fn resolve_dispersion(
    grid: &GridSpec,
    header: Option<DispersionModel>,
    config: Option<&DispersionHeader>,
    a2: Option<f64>,
    a3: Option<f64>,
    k0: Option<f64>,
) -> CliResult<DispersionModel> {
    let base = match (config, header) {
        (Some(c), _) => Some((c.k_0, c.coeffs.clone())),
        (None, Some(h)) => Some((h.k_0(), h.coeffs().to_vec())),
        (None, None) => None,
    };
    if base.is_none() && a2.is_none() && a3.is_none() {
        return Ok(DispersionModel::none(grid));
    }
    let (mut k_0, mut coeffs) = base.unwrap_or_else(|| (centre_k(grid), Vec::new()));
    if let Some(k) = k0 {
        k_0 = k;
    }
    for (i, v) in [a2, a3].into_iter().enumerate() {
        if let Some(v) = v {
            if coeffs.len() <= i {
                coeffs.resize(i + 1, 0.0);
            }
            coeffs[i] = v;
        }
    }
    DispersionModel::new(grid, k_0, &coeffs).map_err(Failure::config)
}

fn centre_k(grid: &GridSpec) -> f64 {
    0.5 * (grid.k_min() + grid.k_max())
}

fn search_from(base: Option<&AutofocusSearch>, r: &RangeArgs) -> AutofocusSearch {
    let mut s = base.cloned().unwrap_or_else(default_search);
    if let Some(v) = r.a2_min {
        s.a2_range.0 = v;
    }
    if let Some(v) = r.a2_max {
        s.a2_range.1 = v;
    }
    if let Some(v) = r.a3_min {
        s.a3_range.0 = v;
    }
    if let Some(v) = r.a3_max {
        s.a3_range.1 = v;
    }
    if let Some(v) = r.grid_points {
        s.grid_points = v;
    }
    if let Some(v) = r.refine_iters {
        s.refine_iters = v;
    }
    s
}

fn report_autofocus(r: &AutofocusResult, verbose: bool) {
    if verbose || !r.converged {
        eprintln!(
            "autofocus: a = {:?}, entropy {:.6}, {} refinement steps, {}",
            r.model.coeffs(),
            r.cost,
            r.iterations,
            if r.converged { "converged" } else { "NOT converged" }
        );
    }
}

fn synth(a: &SynthArgs, verbose: bool) -> CliResult<u8> {
    let cfg = load_config(a.config.as_deref())?;
    if sidecar_paths(&a.truth) == sidecar_paths(&a.spectra) {
        return Err(Failure::config("--truth and --spectra must differ"));
    }
    let mut sc = cfg.scenario.with_seed(a.seed);
    if let Some(v) = a.noise {
        sc.noise_sigma = v;
    }
    if let Some(v) = a.delay_shift {
        sc.delay_shift = v;
    }
    if let Some(v) = a.k0 {
        sc.k_0 = v;
    }
    for (i, v) in [a.a2, a.a3].into_iter().enumerate() {
        if let Some(v) = v {
            if sc.encode_coeffs.len() <= i {
                sc.encode_coeffs.resize(i + 1, 0.0);
            }
            sc.encode_coeffs[i] = v;
        }
    }
    if let Some(n) = a.count {
        match &mut sc.phantom {
            crate::synthesis::PhantomSource::Procedural { count, .. } => *count = n,
            crate::synthesis::PhantomSource::List { .. } => {
                return Err(Failure::config("--count needs a procedural phantom"));
            }
        }
    }
    let data = sc.build(&cfg.recon)?;
    write_image(&a.truth, &data.full.ground_truth, None)?;
    write_real(&a.spectra, &data.full.s_d, Some(&data.encode))?;
    if verbose {
        let g = &data.full.grid;
        eprintln!("synth: {}x{} grid, focal index {}", g.n_x(), g.n_z(), g.focal_z_index());
    }
    Ok(0)
}

fn reconstruct_cmd(a: &ReconstructArgs, verbose: bool) -> CliResult<u8> {
    let cfg = load_config(a.config.as_deref())?;
    distinct(&a.input, &a.output)?;
    let mut p = cfg.recon.clone();
    if let Some(v) = a.nufft_width {
        p.nufft_width = v;
    }
    if let Some(v) = a.nufft_oversample {
        p.nufft_oversample = v;
    }
    if let Some(v) = a.defr_iters {
        p.defr_iters = v;
    }
    if let Some(v) = a.defr_floor {
        p.defr_floor = v;
    }
    if a.no_residual {
        p.defr_residual = false;
    }
    if let Some(v) = a.lambda {
        p.lambda = v;
    }
    if let Some(v) = a.tol {
        p.tol = v;
    }
    if let Some(v) = a.max_iters {
        p.max_iters = v;
    }
    if a.no_add_residual {
        p.add_residual = false;
    }
    if let Some(v) = a.w_min {
        p.w_min = v;
    }
    if let Some(v) = a.w_max {
        p.w_max = v;
    }

    let (s_d, header_d) = read_spectra(&a.input)?;
    let grid = s_d.grid().clone();
    let mut status = 0;
    let d = if a.autofocus {
        let k_0 = a
            .k0
            .or(cfg.dispersion.as_ref().map(|d| d.k_0))
            .or(header_d.as_ref().map(|d| d.k_0()))
            .unwrap_or_else(|| centre_k(&grid));
        let r = autofocus(&s_d, k_0, &search_from(cfg.autofocus.as_ref(), &a.range))?;
        report_autofocus(&r, verbose);
        if !r.converged {
            status = EXIT_AUTOFOCUS;
        }
        r.model
    } else {
        resolve_dispersion(&grid, header_d, cfg.dispersion.as_ref(), a.a2, a.a3, a.k0)?
    };

    let plan = p.plan(grid.clone())?;
    if verbose {
        eprintln!("operator norm estimate {:.6}", plan.op_norm());
    }
    let start = Instant::now();
    let rec = reconstruct(a.method, &s_d, &plan, &d, &p)?;
    if verbose {
        eprint!("{}: {:.3} s", a.method, start.elapsed().as_secs_f64());
        if let Some(t) = &rec.trace {
            eprint!(
                ", {} iterations, {}, {} nonzeros",
                t.iterations(),
                if t.converged { "converged" } else { "iteration cap reached" },
                t.nonzeros
            );
        }
        eprintln!();
    }
    write_image(&a.output, &rec.image, Some(&d))?;
    if let Some(png) = &a.png {
        let max = rec.image.data().iter().fold(0.0f64, |m, v| m.max(v.norm()));
        // an all-zero result still gets a (black) picture
        let reference = if max > 0.0 { max } else { 1.0 };
        let img = log_scale_16bit_with_ref(&rec.image, reference, cfg.floor_db, cfg.ceil_db)?;
        write_png16(png, &img)?;
    }
    if let Some(path) = &a.trace {
        match &rec.trace {
            Some(t) => write_csv(path, &t.records)?,
            None => eprintln!("note: --trace ignored for method {}", a.method),
        }
    }
    Ok(status)
}

/// JSON written by the `autofocus` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutofocusReport {
    pub k_0: f64,
    pub coeffs: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn autofocus_cmd(a: &AutofocusArgs, verbose: bool) -> CliResult<u8> {
    let cfg = load_config(a.config.as_deref())?;
    distinct(&a.input, &a.output)?;
    let (s_d, header_d) = read_spectra(&a.input)?;
    let k_0 = a
        .k0
        .or(cfg.dispersion.as_ref().map(|d| d.k_0))
        .or(header_d.as_ref().map(|d| d.k_0()))
        .unwrap_or_else(|| centre_k(s_d.grid()));
    let r = autofocus(&s_d, k_0, &search_from(cfg.autofocus.as_ref(), &a.range))?;
    report_autofocus(&r, verbose);
    let report = AutofocusReport {
        k_0,
        coeffs: r.model.coeffs().to_vec(),
        cost: r.cost,
        converged: r.converged,
        iterations: r.iterations,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    text.push('\n');
    write_atomic(&a.output, text.as_bytes())?;
    Ok(if r.converged { 0 } else { EXIT_AUTOFOCUS })
}

/// One row of a `compare` or `bench` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub method: String,
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

fn compare(a: &CompareArgs) -> CliResult<u8> {
    let cfg = load_config(a.config.as_deref())?;
    let floor_db = a.floor_db.unwrap_or(cfg.floor_db);
    let ceil_db = a.ceil_db.unwrap_or(cfg.ceil_db);
    let img = read_image(&a.input).map_err(Failure::input)?;
    let truth = read_image(&a.reference).map_err(Failure::input)?;
    let reference_max = match a.scale_max {
        Some(v) => v,
        None => truth.data().iter().fold(0.0f64, |m, v| m.max(v.norm())),
    };
    let r = evaluate_with_ref(&a.label, &img, &truth, reference_max, floor_db, ceil_db)?;
    write_csv(
        &a.output,
        &[ScoreRow {
            method: r.method,
            rmse: r.rmse,
            psnr: r.psnr,
            ssim: r.ssim,
        }],
    )?;
    if let Some(p) = &a.png {
        write_png16(p, &log_scale_16bit_with_ref(&img, reference_max, floor_db, ceil_db)?)?;
    }
    if let Some(p) = &a.reference_png {
        write_png16(p, &log_scale_16bit_with_ref(&truth, reference_max, floor_db, ceil_db)?)?;
    }
    Ok(0)
}

fn bench_cmd(a: &BenchArgs, verbose: bool) -> CliResult<u8> {
    let cfg = load_config(a.config.as_deref())?;
    let sc = cfg.scenario.clone().with_seed(a.seed);
    let data = sc.build(&cfg.recon)?;
    let truth = &data.full.ground_truth;
    let result = bench(&data.full.s_d, truth, &data.encode, &cfg.recon)?;
    fs::create_dir_all(&a.output).map_err(|e| Error::io(&a.output, e))?;
    let rows: Vec<ScoreRow> = result
        .reports
        .iter()
        .map(|r| ScoreRow {
            method: r.method.clone(),
            rmse: r.rmse,
            psnr: r.psnr,
            ssim: r.ssim,
        })
        .collect();
    write_csv(&a.output.join("bench.csv"), &rows)?;
    let reference_max = truth.data().iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let shared = |img| log_scale_16bit_with_ref(img, reference_max, cfg.floor_db, cfg.ceil_db);
    write_png16(&a.output.join("truth.png"), &shared(truth)?)?;
    for rec in &result.reconstructions {
        write_png16(&a.output.join(format!("{}.png", rec.method.slug())), &shared(&rec.image)?)?;
    }
    if verbose {
        for r in &rows {
            eprintln!("{:<10} rmse {:.4e}  psnr {:7.3}  ssim {:.4}", r.method, r.rmse, r.psnr, r.ssim);
        }
    }
    Ok(0)
}
