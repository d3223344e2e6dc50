//! Centered modulo folding `M_λ` and the modulo-sampling front end.

use alloc::vec::Vec;

use crate::error::{positive, Error, Result};
use crate::spline::SplineModel;

/// Folds `x` into the half-open interval `[-λ, λ)`.
///
/// Values already inside the interval are returned bit-for-bit, which makes
/// folding idempotent. `fold(λ) = -λ`.
#[inline]
pub fn fold(x: f64, lambda: f64) -> f64 {
    if x >= -lambda && x < lambda {
        return x;
    }
    let span = 2.0 * lambda;
    let mut r = x - span * libm::floor((x + lambda) / span);
    // rounding can leave r a hair outside the interval
    if r >= lambda {
        r -= span;
    } else if r < -lambda {
        r += span;
    }
    r
}

/// Checked [`fold`].
pub fn modulo_fold(x: f64, lambda: f64) -> Result<f64> {
    let lambda = positive("lambda", lambda)?;
    if !x.is_finite() {
        return Err(Error::NonFinite { name: "x" });
    }
    Ok(fold(x, lambda))
}

/// Folded samples `y_k = M_λ(g(kT))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuloSampleVector {
    values: Vec<f64>,
    lambda: f64,
    period: f64,
}

impl ModuloSampleVector {
    /// Wraps already-folded values, checking that each lies in `[-λ, λ)`.
    pub fn new(values: Vec<f64>, lambda: f64, period: f64) -> Result<Self> {
        let lambda = positive("lambda", lambda)?;
        let period = positive("sampling period", period)?;
        if values.iter().any(|&v| !(v >= -lambda && v < lambda)) {
            return Err(Error::InvalidParameter {
                name: "modulo sample",
                reason: "outside [-lambda, lambda)",
            });
        }
        Ok(Self {
            values,
            lambda,
            period,
        })
    }

    /// Folds arbitrary finite samples.
    pub fn fold_samples(raw: &[f64], lambda: f64, period: f64) -> Result<Self> {
        let lambda = positive("lambda", lambda)?;
        let period = positive("sampling period", period)?;
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { name: "sample" });
        }
        Ok(Self {
            values: raw.iter().map(|&v| fold(v, lambda)).collect(),
            lambda,
            period,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Samples `model` every `period` and folds the result.
pub fn modulo_sample(model: &SplineModel, period: f64, lambda: f64) -> Result<ModuloSampleVector> {
    let raw = model.oversample(period)?;
    ModuloSampleVector::fold_samples(&raw, lambda, period)
}

/// `raw - folded`; each entry is a multiple of `2λ` when `folded` came from
/// `raw`.
pub fn residual(raw: &[f64], folded: &[f64], lambda: f64) -> Result<Vec<f64>> {
    positive("lambda", lambda)?;
    if raw.len() != folded.len() {
        return Err(Error::DimensionMismatch {
            what: "residual",
            expected: raw.len(),
            got: folded.len(),
        });
    }
    Ok(raw.iter().zip(folded).map(|(r, f)| r - f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_examples() {
        assert_eq!(fold(0.3, 1.0), 0.3);
        assert_eq!(fold(-1.0, 1.0), -1.0);
        assert_eq!(fold(1.5, 1.0), -0.5);
        assert_eq!(fold(1.0, 1.0), -1.0);
        assert_eq!(fold(2.5, 1.0), 0.5);
        assert!((fold(-3.7, 1.0) - 0.3).abs() < 1e-12);
        assert!((fold(0.7 + 2.0 * 5.0 * 3.0, 5.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn fold_tiny_negative_stays_in_range() {
        let v = fold(-1e-300 - 2.0, 1.0);
        assert!((-1.0..1.0).contains(&v));
        let w = fold(-2.0 * 1.0 - f64::EPSILON, 1.0);
        assert!((-1.0..1.0).contains(&w));
    }

    #[test]
    fn checked_fold_errors() {
        assert!(modulo_fold(f64::NAN, 1.0).is_err());
        assert!(modulo_fold(1.0, 0.0).is_err());
        assert!(modulo_fold(1.0, -2.0).is_err());
    }

    #[test]
    fn residual_examples() {
        let r = residual(&[1.5, -3.7, 0.2], &[-0.5, fold(-3.7, 1.0), 0.2], 1.0).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-12);
        assert!((r[1] + 4.0).abs() < 1e-12);
        assert_eq!(r[2], 0.0);
        assert!(residual(&[1.0], &[], 1.0).is_err());
    }

    #[test]
    fn sample_vector_checks_range() {
        assert!(ModuloSampleVector::new(alloc::vec![0.0, 1.0], 1.0, 0.1).is_err());
        assert!(ModuloSampleVector::new(alloc::vec![0.0, -1.0], 1.0, 0.1).is_ok());
    }

    #[test]
    fn modulo_sample_constant_models() {
        let m = SplineModel::interpolate(&[2.5; 5], 3, 1.0).unwrap();
        let y = modulo_sample(&m, 0.25, 1.0).unwrap();
        assert!(y.values().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let m = SplineModel::interpolate(&[1.0; 5], 1, 1.0).unwrap();
        let y = modulo_sample(&m, 0.25, 1.0).unwrap();
        assert!(y.values().iter().all(|&v| v == -1.0));
        let small = SplineModel::interpolate(&[0.1, -0.4, 0.3, 0.0], 3, 1.0).unwrap();
        let y = modulo_sample(&small, 0.5, 1.0).unwrap();
        assert_eq!(y.values(), small.oversample(0.5).unwrap().as_slice());
    }
}
