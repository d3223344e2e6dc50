//! NMSE-versus-`m` sweep over image rows.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use uno_core::pipeline::{decode_row, encode_row, nmse, Crop, ExperimentSpec, RowFlags};

use crate::error::{Error, Result};
use crate::image_io::ImageBuffer;

/// Crop size of the default (desk-scale) protocol.
pub const DEFAULT_CROP: (usize, usize) = (64, 48);
pub const DEFAULT_TRIALS: usize = 50;
pub const FULL_PROTOCOL_TRIALS: usize = 1000;
pub const FULL_PROTOCOL_PERIOD: f64 = 0.005;

/// Centered crop of at most `DEFAULT_CROP`.
pub fn default_crop(image: &ImageBuffer) -> Crop {
    let width = image.width().min(DEFAULT_CROP.0);
    let height = image.height().min(DEFAULT_CROP.1);
    Crop {
        x: (image.width() - width) / 2,
        y: (image.height() - height) / 2,
        width,
        height,
    }
}

pub fn apply_crop(image: &ImageBuffer, crop: Option<Crop>) -> Result<ImageBuffer> {
    match crop {
        Some(c) => image.crop(c),
        None => Ok(image.clone()),
    }
}

/// Largest amplitude bound of any row model (lead-in included).
pub fn image_beta_g(image: &ImageBuffer, spec: &ExperimentSpec) -> Result<f64> {
    let mut beta: f64 = 0.0;
    for row in image.rows() {
        beta = beta.max(spec.row_model(row)?.amplitude_bound());
    }
    if beta <= 0.0 {
        return Err(Error::Invalid {
            what: "image",
            reason: "all rows are zero".into(),
        });
    }
    Ok(beta)
}

/// Sets `beta_g` from the (cropped) image and `T` to `rate_fraction` times
/// the resulting bound.
pub fn fit_to_image(spec: &mut ExperimentSpec, image: &ImageBuffer, rate_fraction: f64) -> Result<()> {
    if !(rate_fraction > 0.0 && rate_fraction.is_finite()) {
        return Err(Error::Invalid {
            what: "rate fraction",
            reason: "must be positive".into(),
        });
    }
    let cropped = apply_crop(image, spec.crop)?;
    spec.beta_g = image_beta_g(&cropped, spec)?;
    spec.period = rate_fraction * spec.rate_bound()?;
    Ok(())
}

/// Full-scale settings: whole image, 1000 trials, `T = 0.005`.
pub fn full_protocol(spec: &mut ExperimentSpec) {
    spec.crop = None;
    spec.trials = FULL_PROTOCOL_TRIALS;
    spec.period = FULL_PROTOCOL_PERIOD;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub m: usize,
    pub trial: usize,
    pub nmse: f64,
    pub mean_iters: f64,
    /// Union of the row flags, plus `error` when a row could not be decoded.
    pub flags: Vec<String>,
    pub flagged_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MSummary {
    pub m: usize,
    pub mean_nmse: f64,
    pub median_nmse: f64,
    pub flagged_trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecSummary {
    pub lambda: f64,
    pub order: u32,
    pub l: u32,
    pub period: f64,
    pub h: f64,
    pub beta_g: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub width: usize,
    pub height: usize,
    pub reference_pixels: usize,
    pub reference_level: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub spec: SpecSummary,
    /// Ordered by `m_values`, then trial.
    pub records: Vec<TrialRecord>,
    /// Aligned with `m_values`.
    pub summary: Vec<MSummary>,
    /// Trial-0 reconstruction per entry of `m_values`.
    pub reconstructions: Vec<ImageBuffer>,
}

struct RowOutcome {
    pixels: Vec<f64>,
    iterations: u64,
    flags: RowFlags,
    failed: bool,
}

fn process_row(row: &[f64], spec: &ExperimentSpec, m: usize, row_index: usize, trial: usize, range: (f64, f64)) -> RowOutcome {
    let decoded = encode_row(row, spec, m, row_index as u32, trial as u32)
        .and_then(|cap| decode_row(&cap, spec, range));
    match decoded {
        Ok(d) => RowOutcome {
            pixels: d.pixels,
            iterations: d.iterations,
            flags: d.flags,
            failed: false,
        },
        Err(_) => RowOutcome {
            pixels: vec![spec.reference_level; row.len()],
            iterations: 0,
            flags: RowFlags::default(),
            failed: true,
        },
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Encodes and decodes every row for each `m` and trial.
///
/// Dithers depend only on `(master_seed, trial, row)`, so the report does
/// not depend on scheduling or thread count. Row failures are recorded as
/// flags and the row estimate falls back to `reference_level`.
pub fn run_experiment(image: &ImageBuffer, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let img = apply_crop(image, spec.crop)?;
    let range = (img.lo, img.hi);
    let jobs: Vec<(usize, usize)> = (0..spec.m_values.len())
        .flat_map(|mi| (0..spec.trials).map(move |t| (mi, t)))
        .collect();

    let results: Vec<Result<(TrialRecord, Option<ImageBuffer>)>> = jobs
        .par_iter()
        .map(|&(mi, trial)| {
            let m = spec.m_values[mi];
            let rows: Vec<RowOutcome> = (0..img.height())
                .into_par_iter()
                .map(|y| process_row(img.row(y), spec, m, y, trial, range))
                .collect();
            let estimate: Vec<f64> = rows.iter().flat_map(|r| r.pixels.iter().copied()).collect();
            let mut union = RowFlags::default();
            let mut flagged_rows = 0;
            let mut failed = false;
            for r in &rows {
                union.merge(&r.flags);
                if r.flags.any() || r.failed {
                    flagged_rows += 1;
                }
                failed |= r.failed;
            }
            let mut flags: Vec<String> = union.labels().map(String::from).collect();
            if failed {
                flags.push("error".into());
            }
            let record = TrialRecord {
                m,
                trial,
                nmse: nmse(img.pixels(), &estimate)?,
                mean_iters: rows.iter().map(|r| r.iterations as f64).sum::<f64>() / rows.len() as f64,
                flags,
                flagged_rows,
            };
            let recon = if trial == 0 {
                Some(ImageBuffer::with_range(
                    img.width(),
                    img.height(),
                    estimate,
                    img.lo,
                    img.hi,
                    format!("reconstruction m={m} of {}", img.source),
                )?)
            } else {
                None
            };
            Ok((record, recon))
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut reconstructions = Vec::new();
    for r in results {
        let (record, recon) = r?;
        records.push(record);
        reconstructions.extend(recon);
    }
    let summary = spec
        .m_values
        .iter()
        .map(|&m| {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.m == m).collect();
            let mut values: Vec<f64> = mine.iter().map(|r| r.nmse).collect();
            MSummary {
                m,
                mean_nmse: values.iter().sum::<f64>() / values.len() as f64,
                median_nmse: median(&mut values),
                flagged_trials: mine.iter().filter(|r| !r.flags.is_empty()).count(),
            }
        })
        .collect();
    Ok(ExperimentReport {
        spec: SpecSummary {
            lambda: spec.lambda,
            order: spec.order,
            l: spec.l,
            period: spec.period,
            h: spec.h,
            beta_g: spec.beta_g,
            trials: spec.trials,
            master_seed: spec.master_seed,
            width: img.width(),
            height: img.height(),
            reference_pixels: spec.reference_pixels,
            reference_level: spec.reference_level,
        },
        records,
        summary,
        reconstructions,
    })
}

impl ExperimentReport {
    /// Columns `m, trial, nmse, mean_iters, flags`; flags are `;`-separated.
    pub fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["m", "trial", "nmse", "mean_iters", "flags"])?;
        for r in &self.records {
            out.write_record([
                r.m.to_string(),
                r.trial.to_string(),
                format!("{:e}", r.nmse),
                r.mean_iters.to_string(),
                r.flags.join(";"),
            ])?;
        }
        out.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec,
            "summary": self.summary,
        })
    }

    pub fn median_nmse(&self) -> Vec<f64> {
        self.summary.iter().map(|s| s.median_nmse).collect()
    }
}
