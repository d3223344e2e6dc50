//! `uno` subcommands.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 solver non-convergence.
//! Every output file is written to a temporary and renamed into place.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use uno_core::modulo::ModuloSampleVector;
use uno_core::onebit::{generate_dithers, quantize, quantize_seeded, DitherPlan, OneBitCapture, RowMeta};
use uno_core::pipeline::{decode_row, encode_row, Crop, ExperimentSpec};
use uno_core::rate::{certify, classic_rate_bound, error_budget, uno_rate_bound};
use uno_core::rka::{solve, Init, SolverConfig};
use uno_core::unwrap::{anchor_to_range, unwrap};

use crate::atomic;
use crate::capture_file::{read_capture, write_capture};
use crate::error::{io_err, Error};
use crate::experiment::{default_crop, fit_to_image, full_protocol, run_experiment};
use crate::image_io::{encode_pgm, load_image, ImageBuffer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NONCONVERGED: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    NonConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::NonConverged(_) => EXIT_NONCONVERGED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(s) => write!(f, "usage error: {s}"),
            CliError::Data(e) => write!(f, "error: {e}"),
            CliError::NonConverged(s) => write!(f, "not converged: {s}"),
        }
    }
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` must be positive and finite"))
    }
}

fn finite_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` must be finite"))
    }
}

fn range_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo = finite_f64(a)?;
    let hi = finite_f64(b)?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err("need LO < HI".into())
    }
}

fn crop_spec(s: &str) -> std::result::Result<Crop, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| "expected X,Y,WIDTH,HEIGHT")?;
    match parts[..] {
        [x, y, width, height] if width > 0 && height > 0 => Ok(Crop { x, y, width, height }),
        _ => Err("expected X,Y,WIDTH,HEIGHT with positive size".into()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "uno", version, about = "One-bit modulo sampling: rate bounds, capture, recovery, experiments")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "UNO_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the sampling-period certificate as JSON.
    Rate(RateArgs),
    /// Fold and one-bit quantize a sample vector into a capture file.
    Capture(CaptureArgs),
    /// Recover modulo samples from a capture file.
    Solve(SolveArgs),
    /// Unfold modulo samples.
    Unwrap(UnwrapArgs),
    /// Capture every row of an image into a directory.
    Encode(EncodeArgs),
    /// Reconstruct an image from an `encode` directory.
    Decode(DecodeArgs),
    /// NMSE-versus-m sweep over repeated trials.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long, value_parser = positive_f64)]
    pub lambda: f64,
    #[arg(long, value_parser = positive_f64)]
    pub beta_g: f64,
    #[arg(long, value_parser = positive_f64, default_value_t = 1.0)]
    pub h: f64,
    /// Difference order.
    #[arg(long, default_value_t = 2)]
    pub l: u32,
    /// Spline order N.
    #[arg(long, default_value_t = 3)]
    pub n_order: u32,
    /// Sampling period to certify.
    #[arg(long, value_parser = positive_f64)]
    pub t: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CaptureArgs {
    /// Samples as CSV/whitespace-separated numbers; folded with lambda.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = positive_f64)]
    pub lambda: f64,
    /// Threshold sequences per sample.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub m: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampling period recorded in the header.
    #[arg(long, value_parser = positive_f64, default_value_t = 1.0)]
    pub period: f64,
    /// Store the thresholds instead of the seed.
    #[arg(long)]
    pub explicit: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Zero,
    Midpoint,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
    /// Row-selection seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Midpoint)]
    pub init: InitArg,
}

impl SolverArgs {
    fn config(&self, trace_stride: u64) -> CliResult<SolverConfig> {
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(CliError::Usage("--tol must be non-negative".into()));
        }
        Ok(SolverConfig {
            max_iterations: self.max_iters,
            feasibility_tol: self.tol,
            trace_stride,
            rng_seed: self.seed,
            init: match self.init {
                InitArg::Zero => Init::Zero,
                InitArg::Midpoint => Init::Midpoint,
            },
            record_histogram: false,
        })
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub capture: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Trace CSV: iteration, violation, sqerr_to_reference.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trace_stride: u64,
    /// Known modulo samples for the error column of the trace.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Recovered modulo samples, one per line.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UnwrapArgs {
    /// Modulo samples, CSV/whitespace-separated.
    #[arg(long)]
    pub modulo: PathBuf,
    #[arg(long, value_parser = positive_f64)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub l: u32,
    #[arg(long, value_parser = positive_f64)]
    pub beta_g: f64,
    /// Known value range LO:HI used to fix the global offset.
    #[arg(long, value_parser = range_pair, default_value = "0:255", allow_hyphen_values = true)]
    pub anchor: (f64, f64),
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = positive_f64, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 3)]
    pub n_order: u32,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub l: u32,
    #[arg(long, value_parser = positive_f64, default_value_t = 1.0)]
    pub h: f64,
    /// Sampling period; defaults to `--rate-fraction` times the bound.
    #[arg(long, value_parser = positive_f64)]
    pub period: Option<f64>,
    #[arg(long, value_parser = positive_f64, default_value_t = 0.5)]
    pub rate_fraction: f64,
    /// Crop X,Y,WIDTH,HEIGHT.
    #[arg(long, value_parser = crop_spec)]
    pub crop: Option<Crop>,
    /// Known-level pixels prepended to every row.
    #[arg(long, default_value_t = 1)]
    pub reference_pixels: usize,
    #[arg(long, value_parser = finite_f64, default_value_t = 0.0)]
    pub reference_level: f64,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub m: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trial index mixed into the dither seeds.
    #[arg(long, default_value_t = 0)]
    pub trial: u32,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory (must not exist or be empty).
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Directory written by `encode`.
    #[arg(long)]
    pub captures: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Reconstructed image (PGM, or PNG by extension).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Whole image, 1000 trials, T = 0.005.
    #[arg(long)]
    pub full_protocol: bool,
    /// Writes report.csv, summary.json and recon_m<M>.pgm here; otherwise
    /// the CSV goes to stdout and the summary to stderr.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {:?} threads: {e}", cli.threads)))?;
    match cli.command {
        Command::Rate(a) => cmd_rate(a, stdout),
        Command::Capture(a) => cmd_capture(a, stdout),
        Command::Solve(a) => cmd_solve(a, stdout),
        Command::Unwrap(a) => cmd_unwrap(a, stderr),
        Command::Encode(a) => cmd_encode(a, stdout),
        Command::Decode(a) => cmd_decode(a, stderr),
        Command::Experiment(a) => cmd_experiment(a, &pool, stdout, stderr),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    writeln!(out, "{text}").map_err(|e| CliError::Data(io_err("<stdout>")(e)))
}

fn cmd_rate(a: RateArgs, out: &mut dyn Write) -> CliResult<()> {
    let uno = uno_rate_bound(a.lambda, a.beta_g, a.h, a.l, a.n_order).map_err(usage)?;
    let classic = classic_rate_bound(a.lambda, a.beta_g, a.h, a.l, a.n_order).map_err(usage)?;
    let budget = error_budget(a.lambda, a.l).map_err(usage)?;
    let satisfied = match a.t {
        Some(t) => Some(certify(a.lambda, a.beta_g, a.h, a.l, a.n_order, t).map_err(usage)?.satisfied),
        None => None,
    };
    let json = serde_json::json!({
        "t_max_uno": uno,
        "t_max_classic": classic,
        "error_budget": budget,
        "satisfied": satisfied,
        "lambda": a.lambda,
        "beta_g": a.beta_g,
        "h": a.h,
        "l": a.l,
        "n_order": a.n_order,
        "t": a.t,
    });
    emit(out, &serde_json::to_string_pretty(&json).expect("serializable"))
}

/// Parameter errors found by the core after clap accepted the flags.
fn usage(e: uno_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn read_numbers(path: &Path) -> crate::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let body = line.split('#').next().unwrap_or("");
        for tok in body.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            let at = offset + tok.as_ptr() as usize - line.as_ptr() as usize;
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                what: "number list",
                offset: at,
                reason: format!("`{tok}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    what: "number list",
                    offset: at,
                    reason: "non-finite value".into(),
                });
            }
            out.push(v);
        }
        offset += line.len();
    }
    if out.is_empty() {
        return Err(Error::Invalid {
            what: "number list",
            reason: format!("{} holds no values", path.display()),
        });
    }
    Ok(out)
}

fn write_numbers(path: &Path, values: &[f64]) -> crate::Result<()> {
    atomic::write_with(path, |w| {
        for v in values {
            writeln!(w, "{v:?}").map_err(io_err(path))?;
        }
        Ok(())
    })
}

fn cmd_capture(a: CaptureArgs, out: &mut dyn Write) -> CliResult<()> {
    let raw = read_numbers(&a.input)?;
    let y = ModuloSampleVector::fold_samples(&raw, a.lambda, a.period)?;
    let plan = DitherPlan::new(y.len(), a.m as usize, a.lambda, a.seed);
    let name = a.input.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let meta = RowMeta {
        row_index: 0,
        row_length: y.len() as u32,
        image_id: name.chars().filter(char::is_ascii).collect(),
    };
    let capture = if a.explicit {
        quantize(&y, &generate_dithers(&plan)?)?
    } else {
        quantize_seeded(&y, &plan)?
    }
    .with_row_meta(meta);
    write_capture(&a.out, &capture)?;
    emit(out, &format!("wrote {} ({} x {})", a.out.display(), capture.n(), capture.m()))
}

fn cmd_solve(a: SolveArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = a.solver.config(a.trace_stride)?;
    let capture = read_capture(&a.capture)?;
    let reference = a.reference.as_deref().map(read_numbers).transpose()?;
    let solution = solve(&capture, &config, reference.as_deref())?;
    if let Some(path) = &a.trace {
        atomic::write_with(path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["iteration", "violation", "sqerr_to_reference"])?;
            for p in &solution.trace.recorded {
                csv.write_record([
                    p.iteration.to_string(),
                    format!("{:e}", p.violation),
                    p.sqerr_to_reference.map(|e| format!("{e:e}")).unwrap_or_default(),
                ])?;
            }
            csv.flush().map_err(io_err(path))
        })?;
    }
    if let Some(path) = &a.out {
        write_numbers(path, &solution.y_hat)?;
    }
    let json = serde_json::json!({
        "converged": solution.converged,
        "iterations": solution.trace.iterations_run,
        "final_violation": solution.final_violation,
        "n": capture.n(),
        "m": capture.m(),
    });
    emit(out, &json.to_string())?;
    if solution.converged {
        Ok(())
    } else {
        Err(CliError::NonConverged(format!(
            "violation {:e} after {} iterations",
            solution.final_violation, solution.trace.iterations_run
        )))
    }
}

fn cmd_unwrap(a: UnwrapArgs, err: &mut dyn Write) -> CliResult<()> {
    let y = read_numbers(&a.modulo)?;
    let mut result = unwrap(&y, a.lambda, a.l as usize, a.beta_g)?;
    let anchor = anchor_to_range(&mut result, a.anchor.0, a.anchor.1)?;
    write_numbers(&a.out, &result.gamma_hat)?;
    let d = result.diagnostics;
    let json = serde_json::json!({
        "max_folded_difference": d.max_folded_difference,
        "difference_budget": d.difference_budget,
        "budget_exceeded": d.budget_exceeded,
        "amplitude_exceeded": d.amplitude_exceeded,
        "reduced_confidence": d.reduced_confidence,
        "window": d.window,
        "offset_multiple": result.offset_multiple,
        "anchor_outside": anchor.outside,
        "anchor_ambiguous": anchor.ambiguous,
        "anchor_flagged": anchor.flagged,
    });
    emit(err, &json.to_string())
}

/// Parameters stored next to the per-row captures of `encode`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EncodeManifest {
    pub width: usize,
    pub height: usize,
    pub lo: f64,
    pub hi: f64,
    pub lambda: f64,
    pub order: u32,
    pub l: u32,
    pub period: f64,
    pub h: f64,
    pub beta_g: f64,
    pub m: usize,
    pub master_seed: u64,
    pub trial: u32,
    pub reference_pixels: usize,
    pub reference_level: f64,
    pub source: String,
}

pub const MANIFEST: &str = "manifest.json";

fn row_file(row: usize) -> String {
    format!("row_{row:05}.uno")
}

fn model_spec(model: &ModelArgs, image: &ImageBuffer, m_values: Vec<usize>, seed: u64) -> CliResult<ExperimentSpec> {
    let mut spec = ExperimentSpec::with_defaults(1.0).map_err(usage)?;
    spec.lambda = model.lambda;
    spec.order = model.n_order;
    spec.l = model.l;
    spec.h = model.h;
    spec.m_values = m_values;
    spec.master_seed = seed;
    spec.crop = model.crop;
    spec.reference_pixels = model.reference_pixels;
    spec.reference_level = model.reference_level;
    fit_to_image(&mut spec, image, model.rate_fraction).map_err(|e| match e {
        Error::Core(c) => usage(c),
        other => CliError::Data(other),
    })?;
    if let Some(t) = model.period {
        spec.period = t;
    }
    Ok(spec)
}

fn cmd_encode(a: EncodeArgs, out: &mut dyn Write) -> CliResult<()> {
    let image = load_image(&a.image)?;
    let spec = model_spec(&a.model, &image, vec![a.m as usize], a.seed)?;
    spec.validate().map_err(usage)?;
    let img = crate::experiment::apply_crop(&image, spec.crop)?;
    let captures: Vec<OneBitCapture> = (0..img.height())
        .map(|y| {
            encode_row(img.row(y), &spec, a.m as usize, y as u32, a.trial).map(|c| {
                let mut meta = c.row_meta().clone();
                meta.image_id = img.source.chars().filter(char::is_ascii).take(1024).collect();
                c.with_row_meta(meta)
            })
        })
        .collect::<uno_core::Result<_>>()?;
    let manifest = EncodeManifest {
        width: img.width(),
        height: img.height(),
        lo: img.lo,
        hi: img.hi,
        lambda: spec.lambda,
        order: spec.order,
        l: spec.l,
        period: spec.period,
        h: spec.h,
        beta_g: spec.beta_g,
        m: a.m as usize,
        master_seed: spec.master_seed,
        trial: a.trial,
        reference_pixels: spec.reference_pixels,
        reference_level: spec.reference_level,
        source: img.source.clone(),
    };
    atomic::write_dir(&a.out_dir, |dir| {
        for (y, c) in captures.iter().enumerate() {
            write_capture(&dir.join(row_file(y)), c)?;
        }
        let json = serde_json::to_vec_pretty(&manifest)?;
        atomic::write_bytes(&dir.join(MANIFEST), &json)
    })?;
    emit(
        out,
        &format!(
            "wrote {} rows to {} (T = {:e}, beta_g = {})",
            captures.len(),
            a.out_dir.display(),
            spec.period,
            spec.beta_g
        ),
    )
}

fn cmd_decode(a: DecodeArgs, err: &mut dyn Write) -> CliResult<()> {
    let config = a.solver.config(1_000)?;
    let path = a.captures.join(MANIFEST);
    let text = std::fs::read(&path).map_err(io_err(&path))?;
    let mf: EncodeManifest = serde_json::from_slice(&text)?;
    let mut spec = ExperimentSpec::with_defaults(mf.beta_g)?;
    spec.lambda = mf.lambda;
    spec.order = mf.order;
    spec.l = mf.l;
    spec.period = mf.period;
    spec.h = mf.h;
    spec.m_values = vec![mf.m];
    spec.master_seed = mf.master_seed;
    spec.reference_pixels = mf.reference_pixels;
    spec.reference_level = mf.reference_level;
    spec.solver = config;
    spec.validate()?;
    let mut pixels = Vec::with_capacity(mf.width * mf.height);
    let mut flagged = 0;
    let mut nonconverged = 0;
    for y in 0..mf.height {
        let capture = read_capture(&a.captures.join(row_file(y)))?;
        let row = decode_row(&capture, &spec, (mf.lo, mf.hi))?;
        if row.pixels.len() != mf.width {
            return Err(CliError::Data(Error::Invalid {
                what: "capture",
                reason: format!("row {y} decodes to {} pixels, expected {}", row.pixels.len(), mf.width),
            }));
        }
        flagged += usize::from(row.flags.any());
        nonconverged += usize::from(row.flags.nonconverged);
        pixels.extend(row.pixels);
    }
    let img = ImageBuffer::with_range(mf.width, mf.height, pixels, mf.lo, mf.hi, mf.source)?;
    crate::image_io::save_image(&img, &a.out)?;
    emit(
        err,
        &serde_json::json!({"rows": mf.height, "flagged_rows": flagged, "nonconverged_rows": nonconverged})
            .to_string(),
    )?;
    if nonconverged > 0 {
        return Err(CliError::NonConverged(format!("{nonconverged} rows")));
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs, pool: &rayon::ThreadPool, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    if a.m.is_empty() || a.m.contains(&0) {
        return Err(CliError::Usage("--m needs positive values".into()));
    }
    let image = load_image(&a.image)?;
    let mut model = ModelArgs { ..a.model };
    if model.crop.is_none() && !a.full_protocol {
        model.crop = Some(default_crop(&image));
    }
    let mut spec = model_spec(&model, &image, a.m.clone(), a.seed)?;
    spec.trials = a.trials as usize;
    if a.full_protocol {
        full_protocol(&mut spec);
    }
    spec.validate().map_err(usage)?;
    let report = pool.install(|| run_experiment(&image, &spec))?;
    let summary = serde_json::to_string_pretty(&report.summary_json())?;
    match &a.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            atomic::write_with(&dir.join("report.csv"), |w| report.write_csv(w))?;
            atomic::write_bytes(&dir.join("summary.json"), summary.as_bytes())?;
            for (m, recon) in spec.m_values.iter().zip(&report.reconstructions) {
                atomic::write_bytes(&dir.join(format!("recon_m{m}.pgm")), &encode_pgm(recon))?;
            }
            emit(out, &summary)
        }
        None => {
            report.write_csv(out)?;
            emit(err, &summary)
        }
    }
}
