//! Row-wise encode and decode of image rows.
//!
//! Encode: pixel row → spline model → samples every `T` → fold → one-bit
//! capture against per-(trial, row) dithers. Decode: Kaczmarz estimate of the
//! modulo samples → unwrap → anchor → resample at the pixel grid.
//!
//! Rows may be prefixed with `reference_pixels` pixels at `reference_level`
//! (an optically black lead-in). Unwrapping only recovers a row up to a
//! global multiple of `2λ`; the lead-in pins that multiple. Without it the
//! decoder falls back to majority-in-range anchoring.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{positive, Error, Result};
use crate::modulo::ModuloSampleVector;
use crate::onebit::{quantize_seeded, split_seed, DitherPlan, OneBitCapture, RowMeta};
use crate::rate::uno_rate_bound;
use crate::rka::{solve, SolverConfig};
use crate::spline::SplineModel;
use crate::unwrap::{anchor_to_range, anchor_to_reference, unwrap, AnchorReport, UnwrapDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub lambda: f64,
    /// Spline order `N`.
    pub order: u32,
    /// Difference order `l` used for unwrapping.
    pub l: u32,
    /// Sampling period `T`.
    pub period: f64,
    /// Knot spacing `h`.
    pub h: f64,
    /// Amplitude bound `β_g` handed to the unwrapper.
    pub beta_g: f64,
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub solver: SolverConfig,
    pub crop: Option<Crop>,
    pub reference_pixels: usize,
    pub reference_level: f64,
}

impl ExperimentSpec {
    /// Defaults of the row-wise experiment: `λ = 1`, `N = 3`, `l = 2`,
    /// `h = 1`, `T` at half the one-bit rate bound for `β_g`.
    pub fn with_defaults(beta_g: f64) -> Result<Self> {
        let mut spec = Self {
            lambda: 1.0,
            order: 3,
            l: 2,
            period: 0.0,
            h: 1.0,
            beta_g,
            m_values: vec![5, 10, 20, 40],
            trials: 50,
            master_seed: 0,
            solver: SolverConfig::default(),
            crop: None,
            reference_pixels: 1,
            reference_level: 0.0,
        };
        spec.period = spec.rate_bound()? * 0.5;
        Ok(spec)
    }

    /// One-bit sampling-period bound for the current parameters.
    pub fn rate_bound(&self) -> Result<f64> {
        uno_rate_bound(self.lambda, self.beta_g, self.h, self.l, self.order)
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda", self.lambda)?;
        positive("sampling period", self.period)?;
        positive("h", self.h)?;
        positive("beta_g", self.beta_g)?;
        if self.l < 1 || self.l > self.order {
            return Err(Error::InvalidParameter {
                name: "difference order",
                reason: "need 1 <= l <= N",
            });
        }
        if self.period > self.h {
            return Err(Error::InvalidParameter {
                name: "sampling period",
                reason: "must not exceed h",
            });
        }
        if self.trials < 1 {
            return Err(Error::InvalidParameter {
                name: "trials",
                reason: "must be at least 1",
            });
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return Err(Error::InvalidParameter {
                name: "m values",
                reason: "need at least one positive m",
            });
        }
        if !self.reference_level.is_finite() {
            return Err(Error::NonFinite {
                name: "reference level",
            });
        }
        self.solver.validate()
    }

    /// Seed of the dithers for one row in one trial.
    pub fn row_seed(&self, row_index: u32, trial_index: u32) -> u64 {
        split_seed(self.master_seed, &[u64::from(trial_index), u64::from(row_index)])
    }

    fn padded(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(row.len() + self.reference_pixels);
        out.resize(self.reference_pixels, self.reference_level);
        out.extend_from_slice(row);
        out
    }

    /// Spline model of a row including its reference lead-in.
    pub fn row_model(&self, row: &[f64]) -> Result<SplineModel> {
        if row.len() < self.order as usize + 1 {
            return Err(Error::TooShort {
                what: "pixel row",
                needed: self.order as usize + 1,
                got: row.len(),
            });
        }
        SplineModel::interpolate(&self.padded(row), self.order, self.h)
    }

    /// Unfolded samples `γ_k = g(kT)` of a row (ground truth for tests).
    pub fn row_samples(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.row_model(row)?.oversample(self.period)
    }
}

/// Encodes one pixel row with `m` threshold sequences.
pub fn encode_row(
    row: &[f64],
    spec: &ExperimentSpec,
    m: usize,
    row_index: u32,
    trial_index: u32,
) -> Result<OneBitCapture> {
    let raw = spec.row_samples(row)?;
    let y = ModuloSampleVector::fold_samples(&raw, spec.lambda, spec.period)?;
    let plan = DitherPlan::new(y.len(), m, spec.lambda, spec.row_seed(row_index, trial_index));
    let meta = RowMeta {
        row_index,
        row_length: row.len() as u32,
        image_id: String::new(),
    };
    Ok(quantize_seeded(&y, &plan)?.with_row_meta(meta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RowFlags {
    pub nonconverged: bool,
    pub budget_exceeded: bool,
    pub amplitude_exceeded: bool,
    pub anchor_flagged: bool,
    pub reduced_confidence: bool,
}

impl RowFlags {
    pub fn any(&self) -> bool {
        self.nonconverged
            || self.budget_exceeded
            || self.amplitude_exceeded
            || self.anchor_flagged
            || self.reduced_confidence
    }

    pub fn merge(&mut self, other: &RowFlags) {
        self.nonconverged |= other.nonconverged;
        self.budget_exceeded |= other.budget_exceeded;
        self.amplitude_exceeded |= other.amplitude_exceeded;
        self.anchor_flagged |= other.anchor_flagged;
        self.reduced_confidence |= other.reduced_confidence;
    }

    /// Names of the raised flags.
    pub fn labels(&self) -> impl Iterator<Item = &'static str> {
        [
            (self.nonconverged, "nonconverged"),
            (self.budget_exceeded, "budget"),
            (self.amplitude_exceeded, "amplitude"),
            (self.anchor_flagged, "anchor"),
            (self.reduced_confidence, "short_window"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedRow {
    /// Estimate at the pixel positions of the original row.
    pub pixels: Vec<f64>,
    /// Unfolded oversampled estimate, lead-in included.
    pub samples: Vec<f64>,
    pub iterations: u64,
    pub final_violation: f64,
    pub unwrap: UnwrapDiagnostics,
    pub anchor: AnchorReport,
    pub flags: RowFlags,
}

/// Decodes a capture produced by [`encode_row`] with the same spec.
pub fn decode_row(capture: &OneBitCapture, spec: &ExperimentSpec, anchor: (f64, f64)) -> Result<DecodedRow> {
    if capture.lambda() != spec.lambda {
        return Err(Error::ParameterMismatch { name: "lambda" });
    }
    if capture.period() != spec.period {
        return Err(Error::ParameterMismatch {
            name: "sampling period",
        });
    }
    let row_length = capture.row_meta().row_length as usize;
    let knots = row_length + spec.reference_pixels;
    let expected = libm::floor((knots - 1) as f64 * spec.h / spec.period + 1e-9) as usize + 1;
    if knots < 2 || capture.n() != expected {
        return Err(Error::ParameterMismatch {
            name: "row length",
        });
    }

    let solution = solve(capture, &spec.solver, None)?;
    let mut unwrapped = unwrap(&solution.y_hat, spec.lambda, spec.l as usize, spec.beta_g)?;
    let anchor_report = if spec.reference_pixels > 0 {
        anchor_to_reference(&mut unwrapped, 0, spec.reference_level)?
    } else {
        anchor_to_range(&mut unwrapped, anchor.0, anchor.1)?
    };

    let pixels = resample_to_pixels(&unwrapped.gamma_hat, spec, row_length)?;
    let diag = unwrapped.diagnostics;
    let flags = RowFlags {
        nonconverged: !solution.converged,
        budget_exceeded: diag.budget_exceeded,
        amplitude_exceeded: diag.amplitude_exceeded,
        anchor_flagged: anchor_report.flagged,
        reduced_confidence: diag.reduced_confidence,
    };
    Ok(DecodedRow {
        pixels,
        samples: unwrapped.gamma_hat,
        iterations: solution.trace.iterations_run,
        final_violation: solution.final_violation,
        unwrap: diag,
        anchor: anchor_report,
        flags,
    })
}

/// Values at `t = (P + j) h` for the `row_length` pixels after the lead-in.
///
/// When `h/T` is an integer the matching samples are taken directly;
/// otherwise the samples are re-interpolated with the row's spline order.
pub fn resample_to_pixels(samples: &[f64], spec: &ExperimentSpec, row_length: usize) -> Result<Vec<f64>> {
    let ratio = spec.h / spec.period;
    let stride = libm::round(ratio);
    let offset = spec.reference_pixels;
    if libm::fabs(ratio - stride) < 1e-9 {
        let stride = stride as usize;
        return (0..row_length)
            .map(|j| {
                samples.get((offset + j) * stride).copied().ok_or(Error::TooShort {
                    what: "unwrapped samples",
                    needed: (offset + j) * stride + 1,
                    got: samples.len(),
                })
            })
            .collect();
    }
    let model = SplineModel::interpolate(samples, spec.order, spec.period)?;
    (0..row_length)
        .map(|j| model.eval((offset + j) as f64 * spec.h))
        .collect()
}

/// `‖truth − estimate‖² / ‖truth‖²`.
pub fn nmse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            what: "nmse",
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let energy: f64 = truth.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::InvalidParameter {
            name: "truth",
            reason: "all-zero reference has no normalisation",
        });
    }
    let err: f64 = truth
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(err / energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onebit::coordinate_bounds;

    fn small_spec() -> ExperimentSpec {
        let mut s = ExperimentSpec::with_defaults(255.0).unwrap();
        s.master_seed = 9;
        s
    }

    #[test]
    fn nmse_examples() {
        let t = [1.0, -2.0, 3.0];
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        assert_eq!(nmse(&t, &[0.0; 3]).unwrap(), 1.0);
        assert_eq!(nmse(&t, &[2.0, -4.0, 6.0]).unwrap(), 1.0);
        assert!(nmse(&t, &[1.0]).is_err());
        assert!(nmse(&[0.0; 3], &t).is_err());
    }

    #[test]
    fn constant_low_row_folds_to_itself() {
        let mut spec = small_spec();
        spec.reference_pixels = 0;
        let row = [0.5; 6];
        let cap = encode_row(&row, &spec, 8, 0, 0).unwrap();
        let gamma = cap.thresholds().unwrap();
        for b in coordinate_bounds(cap.bits(), &gamma) {
            assert!(b.lower <= 0.5 + 1e-12 && 0.5 - 1e-12 <= b.upper);
        }
        assert_eq!(crate::onebit::violation(&cap, &vec![0.5; cap.n()]).unwrap(), 0.0);
    }

    #[test]
    fn short_row_rejected() {
        let spec = small_spec();
        assert!(matches!(
            encode_row(&[1.0, 2.0, 3.0], &spec, 4, 0, 0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn decode_constant_row() {
        let spec = small_spec();
        let row = [120.0; 6];
        let cap = encode_row(&row, &spec, 40, 3, 0).unwrap();
        let out = decode_row(&cap, &spec, (0.0, 255.0)).unwrap();
        let budget = 2.0 * spec.lambda / 8.0;
        for p in &out.pixels {
            assert!((p - 120.0).abs() <= budget, "{p}");
        }
    }

    #[test]
    fn decode_checks_parameters() {
        let spec = small_spec();
        let cap = encode_row(&[10.0; 5], &spec, 4, 0, 0).unwrap();
        let mut other = spec.clone();
        other.lambda = 2.0;
        assert_eq!(
            decode_row(&cap, &other, (0.0, 255.0)),
            Err(Error::ParameterMismatch { name: "lambda" })
        );
        let mut other = spec.clone();
        other.period *= 0.5;
        assert!(decode_row(&cap, &other, (0.0, 255.0)).is_err());
    }

    #[test]
    fn seeds_depend_on_row_and_trial() {
        let spec = small_spec();
        assert_ne!(spec.row_seed(0, 1), spec.row_seed(1, 0));
        assert_eq!(spec.row_seed(4, 2), spec.row_seed(4, 2));
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec();
        assert!(s.validate().is_ok());
        s.l = 4;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.m_values = vec![];
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.period = 2.0;
        assert!(s.validate().is_err());
    }
}
