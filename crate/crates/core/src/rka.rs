//! Randomized Kaczmarz solver for the one-bit feasibility problem
//! `Ω̃ y ⪰ vec(R) ⊙ vec(Γ)`.
//!
//! Row `(k, ℓ)` of `Ω̃` is `R[k][ℓ] e_k`: unit norm, one nonzero. Sampling
//! rows proportionally to their squared norm is therefore uniform over the
//! `n·m` pairs, and each projection touches a single coordinate.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::onebit::{coordinate_bounds, CoordinateBounds, OneBitCapture, SignMatrix, ThresholdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zero,
    /// Midpoint of each coordinate's feasible interval clipped to `[-λ, λ]`.
    Midpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: u64,
    /// Stop once the largest constraint violation is at most this.
    pub feasibility_tol: f64,
    /// Record telemetry every `trace_stride` iterations.
    pub trace_stride: u64,
    pub rng_seed: u64,
    pub init: Init,
    pub record_histogram: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000_000,
            feasibility_tol: 1e-9,
            trace_stride: 1_000,
            rng_seed: 0,
            init: Init::Midpoint,
            record_histogram: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidParameter {
                name: "max_iterations",
                reason: "must be at least 1",
            });
        }
        if self.trace_stride < 1 {
            return Err(Error::InvalidParameter {
                name: "trace_stride",
                reason: "must be at least 1",
            });
        }
        if !(self.feasibility_tol >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "feasibility_tol",
                reason: "must be non-negative",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: u64,
    pub violation: f64,
    pub sqerr_to_reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub iterations_run: u64,
    pub recorded: Vec<TracePoint>,
    /// Selection count per constraint row, indexed `k * m + ℓ`.
    pub selected_row_histogram: Option<Vec<u64>>,
    /// Number of unknowns `n`.
    pub dimension: usize,
    /// `‖y₀ − ŷ‖²` with `ŷ` the returned point.
    pub initial_sqdist_to_solution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub y_hat: Vec<f64>,
    pub trace: SolveTrace,
    pub converged: bool,
    pub final_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `c y ≥ b`
    Inequality,
    /// `c y = b`
    Equality,
}

/// Step length `β` for projecting onto row `c` with right-hand side `b`,
/// given the current product `c y`.
#[inline]
pub fn projection_coefficient(b: f64, cy: f64, kind: ConstraintKind) -> f64 {
    match kind {
        ConstraintKind::Inequality => (b - cy).max(0.0),
        ConstraintKind::Equality => b - cy,
    }
}

/// One Kaczmarz projection `y ← y + β/‖c‖² c` for a sparse row `c`.
pub fn project_row(y: &mut [f64], row: &[(usize, f64)], b: f64, kind: ConstraintKind) {
    let cy: f64 = row.iter().map(|&(j, c)| c * y[j]).sum();
    let norm_sq: f64 = row.iter().map(|&(_, c)| c * c).sum();
    if norm_sq == 0.0 {
        return;
    }
    let beta = projection_coefficient(b, cy, kind);
    for &(j, c) in row {
        y[j] += beta / norm_sq * c;
    }
}

/// Expected contraction rate `q = 1/κ²` with `κ² = m`.
pub fn theoretical_rate(m: usize) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "must be at least 1",
        });
    }
    Ok(1.0 / m as f64)
}

fn max_excess(bounds: &[CoordinateBounds], y: &[f64]) -> f64 {
    bounds
        .iter()
        .zip(y)
        .map(|(b, &v)| b.excess(v))
        .fold(0.0, f64::max)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Unbiased index in `0..bound`.
#[inline]
fn draw_index(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    ((u128::from(rng.next_u64()) * bound as u128) >> 64) as usize
}

pub fn solve(
    capture: &OneBitCapture,
    config: &SolverConfig,
    reference: Option<&[f64]>,
) -> Result<Solution> {
    let gamma = capture.thresholds()?;
    solve_with(capture.bits(), &gamma, capture.lambda(), config, reference)
}

/// [`solve`] with the thresholds already materialised.
pub fn solve_with(
    bits: &SignMatrix,
    gamma: &ThresholdMatrix,
    lambda: f64,
    config: &SolverConfig,
    reference: Option<&[f64]>,
) -> Result<Solution> {
    config.validate()?;
    let (n, m) = (bits.rows(), bits.cols());
    if n == 0 || m == 0 {
        return Err(Error::EmptyCapture);
    }
    if gamma.rows() != n || gamma.cols() != m {
        return Err(Error::DimensionMismatch {
            what: "thresholds vs bits",
            expected: n * m,
            got: gamma.rows() * gamma.cols(),
        });
    }
    if let Some(r) = reference {
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                what: "reference",
                expected: n,
                got: r.len(),
            });
        }
    }

    // Telemetry only: the per-coordinate bounds give the exact max violation
    // in O(n). Iterates come from the projections below.
    let bounds = coordinate_bounds(bits, gamma);
    let mut y = match config.init {
        Init::Zero => vec![0.0; n],
        Init::Midpoint => bounds.iter().map(|b| b.midpoint(lambda)).collect(),
    };
    let y0 = y.clone();

    let total = n * m;
    let epoch = total as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut histogram = config.record_histogram.then(|| vec![0u64; total]);
    let mut recorded = Vec::new();
    let record = |i: u64, y: &[f64], recorded: &mut Vec<TracePoint>| {
        recorded.push(TracePoint {
            iteration: i,
            violation: max_excess(&bounds, y),
            sqerr_to_reference: reference.map(|r| sq_dist(y, r)),
        });
    };

    record(0, &y, &mut recorded);
    let mut violation = max_excess(&bounds, &y);
    let mut converged = violation <= config.feasibility_tol;
    let mut iterations = 0u64;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let j = draw_index(&mut rng, total);
        if let Some(h) = histogram.as_mut() {
            h[j] += 1;
        }
        let (k, l) = (j / m, j % m);
        let r = bits.get(k, l);
        let beta = projection_coefficient(r * gamma.get(k, l), r * y[k], ConstraintKind::Inequality);
        y[k] += r * beta;

        if iterations % config.trace_stride == 0 {
            record(iterations, &y, &mut recorded);
        }
        if iterations % epoch == 0 {
            violation = max_excess(&bounds, &y);
            converged = violation <= config.feasibility_tol;
        }
    }
    violation = max_excess(&bounds, &y);
    converged = converged || violation <= config.feasibility_tol;
    if recorded.last().map(|p| p.iteration) != Some(iterations) {
        record(iterations, &y, &mut recorded);
    }

    // Projections never overshoot a coordinate's feasible interval, so the
    // last iterate is also the least violating one.
    let initial_sqdist_to_solution = sq_dist(&y0, &y);
    Ok(Solution {
        trace: SolveTrace {
            iterations_run: iterations,
            recorded,
            selected_row_histogram: histogram,
            dimension: n,
            initial_sqdist_to_solution,
        },
        y_hat: y,
        converged,
        final_violation: violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub iteration: u64,
    /// Mean over traces of `‖y_i − y⋆‖² / n`.
    pub mean_sqerr: f64,
    /// `(1 − 1/m)^(i/n) · mean(‖y₀ − ŷ‖²)/n + ρ²`.
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub points: Vec<EnvelopePoint>,
    pub exceedances: usize,
    /// Largest exceedance fraction still counted as a pass.
    pub allowed_fraction: f64,
    pub passed: bool,
}

/// Fraction of recorded iterations at which the empirical mean may exceed the
/// envelope before the check fails.
pub const ENVELOPE_SLACK: f64 = 0.05;

/// Compares the ensemble-mean squared error to the reference against the
/// expected-error envelope `(1 − 1/m)^i ‖y₀ − ŷ‖² + ρ²`.
///
/// The capture splits into `n` independent single-coordinate systems, each
/// with `κ² = m`; `i` counts iterations per coordinate (`iteration / n`) and
/// squared errors are averaged per coordinate.
pub fn proposition1_envelope(traces: &[SolveTrace], m: usize, rho: f64) -> Result<EnvelopeReport> {
    let q = theoretical_rate(m)?;
    let longest = traces
        .iter()
        .max_by_key(|t| t.recorded.len())
        .ok_or(Error::InvalidParameter {
            name: "traces",
            reason: "need at least one trace",
        })?;
    let n = longest.dimension;
    if traces.iter().any(|t| t.dimension != n) {
        return Err(Error::InvalidParameter {
            name: "traces",
            reason: "traces must share a dimension",
        });
    }
    let grid: Vec<u64> = longest.recorded.iter().map(|p| p.iteration).collect();
    let mut sums = vec![0.0; grid.len()];
    for t in traces {
        if t.recorded.is_empty() {
            return Err(Error::MissingReference);
        }
        for (idx, &it) in grid.iter().enumerate() {
            // a converged run stays put, so its last value carries forward
            let p = t.recorded.get(idx).unwrap_or(&t.recorded[t.recorded.len() - 1]);
            if idx < t.recorded.len() && p.iteration != it {
                return Err(Error::InvalidParameter {
                    name: "traces",
                    reason: "traces must share a recording grid",
                });
            }
            sums[idx] += p.sqerr_to_reference.ok_or(Error::MissingReference)?;
        }
    }
    let count = traces.len() as f64;
    let start = traces.iter().map(|t| t.initial_sqdist_to_solution).sum::<f64>() / count;
    let dim = n as f64;
    let points: Vec<EnvelopePoint> = grid
        .iter()
        .zip(&sums)
        .map(|(&it, &s)| EnvelopePoint {
            iteration: it,
            mean_sqerr: s / count / dim,
            envelope: libm::pow(1.0 - q, it as f64 / dim) * start / dim + rho * rho,
        })
        .collect();
    let exceedances = points.iter().filter(|p| p.mean_sqerr > p.envelope).count();
    let passed = (exceedances as f64) < ENVELOPE_SLACK * points.len() as f64;
    Ok(EnvelopeReport {
        points,
        exceedances,
        allowed_fraction: ENVELOPE_SLACK,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulo::ModuloSampleVector;
    use crate::onebit::{quantize, quantize_seeded, violation, DitherPlan};

    fn config(init: Init) -> SolverConfig {
        SolverConfig {
            max_iterations: 1_000_000,
            feasibility_tol: 1e-9,
            trace_stride: 10,
            rng_seed: 3,
            init,
            record_histogram: true,
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(theoretical_rate(1).unwrap(), 1.0);
        assert_eq!(theoretical_rate(25).unwrap(), 0.04);
        assert!(theoretical_rate(0).is_err());
        let bound = libm::pow(1.0 - theoretical_rate(25).unwrap(), 100.0);
        assert!((bound - 0.016_870_319_4).abs() < 1e-9);
    }

    #[test]
    fn coefficient_branches() {
        assert_eq!(projection_coefficient(1.0, 0.25, ConstraintKind::Inequality), 0.75);
        assert_eq!(projection_coefficient(1.0, 2.0, ConstraintKind::Inequality), 0.0);
        assert_eq!(projection_coefficient(1.0, 2.0, ConstraintKind::Equality), -1.0);

        // equality rows: Kaczmarz on a 2x2 system x + y = 3, x - y = 1
        let mut y = [0.0, 0.0];
        for _ in 0..60 {
            project_row(&mut y, &[(0, 1.0), (1, 1.0)], 3.0, ConstraintKind::Equality);
            project_row(&mut y, &[(0, 1.0), (1, -1.0)], 1.0, ConstraintKind::Equality);
        }
        assert!((y[0] - 2.0).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn feasible_start_is_returned_unchanged() {
        let y = ModuloSampleVector::new(vec![0.1, -0.2, 0.3], 1.0, 0.1).unwrap();
        let cap = quantize_seeded(&y, &DitherPlan::new(3, 8, 1.0, 4)).unwrap();
        let sol = solve(&cap, &config(Init::Midpoint), None).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.trace.iterations_run, 0);
        let gamma = cap.thresholds().unwrap();
        let mid: Vec<f64> = coordinate_bounds(cap.bits(), &gamma)
            .iter()
            .map(|b| b.midpoint(1.0))
            .collect();
        assert_eq!(sol.y_hat, mid);
    }

    #[test]
    fn one_dimensional_interval() {
        // y ≥ 0.3 and y ≤ 0.6
        let gamma = ThresholdMatrix::from_vec(1, 2, vec![0.3, 0.6]).unwrap();
        let y = ModuloSampleVector::new(vec![0.45], 1.0, 0.1).unwrap();
        let cap = quantize(&y, &gamma).unwrap();
        assert_eq!(cap.bits().get(0, 0), 1.0);
        assert_eq!(cap.bits().get(0, 1), -1.0);
        let mut cfg = config(Init::Zero);
        cfg.trace_stride = 1;
        let sol = solve(&cap, &cfg, None).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.y_hat, vec![0.3]);
        // every step before the first hit of the lower row leaves y at 0
        let first_move = sol
            .trace
            .recorded
            .iter()
            .find(|p| p.violation == 0.0)
            .unwrap();
        assert!(first_move.iteration >= 1);
    }

    #[test]
    fn two_dimensional_toy_lands_in_intervals() {
        let truth = [0.2, -0.4];
        let y = ModuloSampleVector::new(truth.to_vec(), 1.0, 0.1).unwrap();
        let cap = quantize_seeded(&y, &DitherPlan::new(2, 100, 1.0, 8)).unwrap();
        let sol = solve(&cap, &config(Init::Zero), Some(&truth)).unwrap();
        assert!(sol.converged);
        assert!(violation(&cap, &sol.y_hat).unwrap() <= 1e-9);
        // brute-force interval oracle
        let gamma = cap.thresholds().unwrap();
        for k in 0..2 {
            let mut lo = -1.0f64;
            let mut hi = 1.0f64;
            for l in 0..100 {
                let t = gamma.get(k, l);
                if truth[k] >= t {
                    lo = lo.max(t);
                } else {
                    hi = hi.min(t);
                }
            }
            assert!(sol.y_hat[k] >= lo - 1e-12 && sol.y_hat[k] <= hi + 1e-12);
        }
        let hist = sol.trace.selected_row_histogram.unwrap();
        assert_eq!(hist.iter().sum::<u64>(), sol.trace.iterations_run);
    }

    #[test]
    fn single_coordinate_updates_and_determinism() {
        let truth: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 0.9).collect();
        let y = ModuloSampleVector::new(truth.clone(), 1.0, 0.1).unwrap();
        let cap = quantize_seeded(&y, &DitherPlan::new(20, 10, 1.0, 1)).unwrap();
        let mut cfg = config(Init::Zero);
        cfg.trace_stride = 1;
        let a = solve(&cap, &cfg, Some(&truth)).unwrap();
        let b = solve(&cap, &cfg, Some(&truth)).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.recorded.iter().all(|p| p.violation >= 0.0));
        assert!(a.y_hat.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn exhausted_budget_reports_nonconvergence() {
        let truth = [0.9, -0.9, 0.5];
        let y = ModuloSampleVector::new(truth.to_vec(), 1.0, 0.1).unwrap();
        let cap = quantize_seeded(&y, &DitherPlan::new(3, 50, 1.0, 2)).unwrap();
        let mut cfg = config(Init::Zero);
        cfg.max_iterations = 2;
        cfg.feasibility_tol = 0.0;
        let sol = solve(&cap, &cfg, None).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.trace.iterations_run, 2);
        assert!(sol.final_violation > 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        c.trace_stride = 0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.feasibility_tol = f64::NAN;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.max_iterations = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn envelope_with_feasible_start() {
        let y = ModuloSampleVector::new(vec![0.1, 0.2], 1.0, 0.1).unwrap();
        let cap = quantize_seeded(&y, &DitherPlan::new(2, 5, 1.0, 1)).unwrap();
        let sol = solve(&cap, &config(Init::Midpoint), Some(&[0.1, 0.2])).unwrap();
        let err0 = sol.trace.recorded[0].sqerr_to_reference.unwrap();
        let report = proposition1_envelope(&[sol.trace.clone()], 5, libm::sqrt(err0 / 2.0)).unwrap();
        assert!(report.points[0].envelope >= report.points[0].mean_sqerr);
        assert!(report.passed);

        let bare = solve(&cap, &config(Init::Midpoint), None).unwrap();
        assert_eq!(
            proposition1_envelope(&[bare.trace], 5, 0.1),
            Err(Error::MissingReference)
        );
        assert!(proposition1_envelope(&[], 5, 0.1).is_err());
    }
}
