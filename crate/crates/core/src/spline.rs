//! Order-`N` B-spline model of one signal row.
//!
//! A row of samples `s[k]` is turned into coefficients `c[k]` so that
//! `g(t) = Σ_k c[k] B_N(t/h - k)` passes through every sample at `t = k h`.
//! Coefficients are extended with whole-sample mirror symmetry outside
//! `0..n`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{positive, Error, Result};

/// Grid refinement used when measuring `‖g‖∞`.
pub const AMPLITUDE_OVERSAMPLING: usize = 16;

/// Centered cardinal B-spline of order `order` evaluated at `x`.
///
/// Orders up to 3 use the closed-form pieces; higher orders go through the
/// Cox–de Boor recursion. The order-0 box is the half-open `[-1/2, 1/2)`.
pub fn bspline(order: u32, x: f64) -> f64 {
    let half = 0.5 * (f64::from(order) + 1.0);
    let ax = libm::fabs(x);
    if order == 0 {
        return if (-0.5..0.5).contains(&x) { 1.0 } else { 0.0 };
    }
    if ax >= half {
        return 0.0;
    }
    match order {
        1 => 1.0 - ax,
        2 => {
            if ax < 0.5 {
                0.75 - ax * ax
            } else {
                let u = 1.5 - ax;
                0.5 * u * u
            }
        }
        3 => {
            if ax < 1.0 {
                2.0 / 3.0 - ax * ax + 0.5 * ax * ax * ax
            } else {
                let u = 2.0 - ax;
                u * u * u / 6.0
            }
        }
        _ => cox_de_boor(order, x + half),
    }
}

/// Uncentered cardinal B-spline `M_{order+1}(t)` supported on `[0, order+1)`.
fn cox_de_boor(order: u32, t: f64) -> f64 {
    let k = order as usize + 1;
    // vals[i] = M_j(t - i)
    let mut vals = vec![0.0; k + 1];
    for (i, v) in vals.iter_mut().enumerate() {
        let u = t - i as f64;
        *v = if (0.0..1.0).contains(&u) { 1.0 } else { 0.0 };
    }
    for j in 1..k {
        let jf = j as f64;
        for i in 0..k - j {
            let u = t - i as f64;
            vals[i] = (u * vals[i] + (jf + 1.0 - u) * vals[i + 1]) / jf;
        }
    }
    vals[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Whole-sample symmetric extension: `c[-k] = c[k]`, `c[n-1+k] = c[n-1-k]`.
    Mirror,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineModel {
    order: u32,
    h: f64,
    coefficients: Vec<f64>,
    boundary: Boundary,
}

/// Maps an integer knot index onto `0..n` under mirror extension.
pub(crate) fn mirror_index(k: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let r = k.rem_euclid(period);
    if r >= n as i64 {
        (period - r) as usize
    } else {
        r as usize
    }
}

/// Poles of the direct B-spline interpolation filter.
fn filter_poles(order: u32) -> Option<Vec<f64>> {
    use libm::sqrt;
    let poles = match order {
        2 => vec![sqrt(8.0) - 3.0],
        3 => vec![sqrt(3.0) - 2.0],
        4 => vec![
            sqrt(664.0 - sqrt(438_976.0)) + sqrt(304.0) - 19.0,
            sqrt(664.0 + sqrt(438_976.0)) - sqrt(304.0) - 19.0,
        ],
        5 => vec![
            sqrt(135.0 / 2.0 - sqrt(17_745.0 / 4.0)) + sqrt(105.0 / 4.0) - 13.0 / 2.0,
            sqrt(135.0 / 2.0 + sqrt(17_745.0 / 4.0)) - sqrt(105.0 / 4.0) - 13.0 / 2.0,
        ],
        _ => return None,
    };
    Some(poles)
}

/// Causal initialisation for mirror boundaries (exact, no truncation).
fn initial_causal(c: &[f64], z: f64) -> f64 {
    let n = c.len();
    let iz = 1.0 / z;
    let mut zn = z;
    let mut z2n = libm::pow(z, (n - 1) as f64);
    let mut sum = c[0] + z2n * c[n - 1];
    z2n *= z2n * iz;
    for &v in &c[1..n - 1] {
        sum += (zn + z2n) * v;
        zn *= z;
        z2n *= iz;
    }
    sum / (1.0 - zn * zn)
}

fn initial_anticausal(c: &[f64], z: f64) -> f64 {
    let n = c.len();
    (z / (z * z - 1.0)) * (z * c[n - 2] + c[n - 1])
}

fn recursive_prefilter(c: &mut [f64], poles: &[f64]) {
    let n = c.len();
    let gain: f64 = poles.iter().map(|&z| (1.0 - z) * (1.0 - 1.0 / z)).product();
    for v in c.iter_mut() {
        *v *= gain;
    }
    for &z in poles {
        c[0] = initial_causal(c, z);
        for k in 1..n {
            c[k] += z * c[k - 1];
        }
        c[n - 1] = initial_anticausal(c, z);
        for k in (0..n - 1).rev() {
            c[k] = z * (c[k + 1] - c[k]);
        }
    }
}

/// Solves the mirror-boundary interpolation system directly. Used for orders
/// without a tabulated filter.
fn dense_prefilter(samples: &[f64], order: u32) -> Vec<f64> {
    let n = samples.len();
    let reach = (order as i64 + 1) / 2;
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for k in (i as i64 - reach)..=(i as i64 + reach) {
            let w = bspline(order, (i as i64 - k) as f64);
            a[i * n + mirror_index(k, n)] += w;
        }
    }
    let mut b = samples.to_vec();
    // Gaussian elimination with partial pivoting
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| libm::fabs(a[p * n + col]).total_cmp(&libm::fabs(a[q * n + col])))
            .unwrap_or(col);
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for j in col..n {
                    a[row * n + j] -= f * a[col * n + j];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for j in col + 1..n {
            s -= a[col * n + j] * b[j];
        }
        b[col] = s / a[col * n + col];
    }
    b
}

impl SplineModel {
    /// Builds the interpolating model of `samples` with knot spacing `h`.
    pub fn interpolate(samples: &[f64], order: u32, h: f64) -> Result<Self> {
        let h = positive("dilation h", h)?;
        let needed = order as usize + 1;
        if samples.len() < needed {
            return Err(Error::TooShort {
                what: "sample row",
                needed,
                got: samples.len(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { name: "sample" });
        }
        let coefficients = if order <= 1 || samples.len() == 1 {
            samples.to_vec()
        } else if let Some(poles) = filter_poles(order) {
            let mut c = samples.to_vec();
            recursive_prefilter(&mut c, &poles);
            c
        } else {
            dense_prefilter(samples, order)
        };
        Ok(Self {
            order,
            h,
            coefficients,
            boundary: Boundary::Mirror,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn dilation(&self) -> f64 {
        self.h
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Length of the interval `[0, (n-1) h]` spanned by the knots.
    pub fn domain_length(&self) -> f64 {
        (self.coefficients.len() - 1) as f64 * self.h
    }

    /// `g(t)`. Outside the domain the mirrored coefficients apply.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite { name: "t" });
        }
        Ok(self.eval_finite(t))
    }

    pub(crate) fn eval_finite(&self, t: f64) -> f64 {
        let x = t / self.h;
        let half = 0.5 * (f64::from(self.order) + 1.0);
        let first = libm::ceil(x - half) as i64;
        let last = libm::floor(x + half) as i64;
        let n = self.coefficients.len();
        (first..=last)
            .map(|k| self.coefficients[mirror_index(k, n)] * bspline(self.order, x - k as f64))
            .sum()
    }

    /// Number of samples `floor(domain/T) + 1` produced by [`oversample`].
    ///
    /// [`oversample`]: SplineModel::oversample
    pub fn sample_count(&self, period: f64) -> usize {
        libm::floor(self.domain_length() / period + 1e-9) as usize + 1
    }

    /// Samples `g(kT)` covering the model domain.
    pub fn oversample(&self, period: f64) -> Result<Vec<f64>> {
        let period = positive("sampling period", period)?;
        if period > self.h {
            return Err(Error::InvalidParameter {
                name: "sampling period",
                reason: "must not exceed the knot spacing h",
            });
        }
        if period > self.domain_length() {
            return Err(Error::InvalidParameter {
                name: "sampling period",
                reason: "larger than the model domain",
            });
        }
        Ok((0..self.sample_count(period))
            .map(|k| self.eval_finite(k as f64 * period))
            .collect())
    }

    /// `max |g|` over a grid `AMPLITUDE_OVERSAMPLING` times finer than the knots.
    pub fn amplitude_bound(&self) -> f64 {
        let steps = (self.coefficients.len() - 1) * AMPLITUDE_OVERSAMPLING;
        let dt = self.h / AMPLITUDE_OVERSAMPLING as f64;
        (0..=steps)
            .map(|k| libm::fabs(self.eval_finite(k as f64 * dt)))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense solve of the cubic interpolation system with hard-coded knot
    /// weights 1/6, 2/3, 1/6 and mirror rows.
    fn cubic_oracle(samples: &[f64]) -> Vec<f64> {
        let n = samples.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for (d, w) in [(-1i64, 1.0 / 6.0), (0, 2.0 / 3.0), (1, 1.0 / 6.0)] {
                let k = i as i64 + d;
                let j = if k < 0 {
                    (-k) as usize
                } else if k >= n as i64 {
                    2 * (n - 1) - k as usize
                } else {
                    k as usize
                };
                a[i][j] += w;
            }
        }
        let mut b = samples.to_vec();
        for c in 0..n {
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for j in c..n {
                    a[r][j] -= f * a[c][j];
                }
                b[r] -= f * b[c];
            }
        }
        for c in (0..n).rev() {
            let s: f64 = (c + 1..n).map(|j| a[c][j] * b[j]).sum();
            b[c] = (b[c] - s) / a[c][c];
        }
        b
    }

    #[test]
    fn bspline_values() {
        assert_eq!(bspline(0, 0.0), 1.0);
        assert_eq!(bspline(0, -0.5), 1.0);
        assert_eq!(bspline(0, 0.5), 0.0);
        assert!((bspline(3, 0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(bspline(3, 2.1), 0.0);
        assert_eq!(bspline(3, -2.0), 0.0);
        assert!((bspline(2, 1.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn cox_de_boor_agrees_with_closed_forms() {
        for order in 1..=3u32 {
            for i in -40..=40 {
                let x = i as f64 * 0.05 + 0.013;
                let half = 0.5 * (order as f64 + 1.0);
                let r = cox_de_boor(order, x + half);
                assert!((r - bspline(order, x)).abs() < 1e-14, "order {order} x {x}");
            }
        }
    }

    #[test]
    fn short_or_bad_rows_rejected() {
        assert!(matches!(
            SplineModel::interpolate(&[1.0, 2.0, 3.0], 3, 1.0),
            Err(Error::TooShort { .. })
        ));
        assert!(SplineModel::interpolate(&[1.0, f64::NAN, 3.0, 4.0], 3, 1.0).is_err());
        assert!(SplineModel::interpolate(&[1.0, 2.0], 1, 0.0).is_err());
    }

    #[test]
    fn low_orders_copy_samples() {
        let s = [3.0, -1.0, 4.0, 1.5];
        for order in [0, 1] {
            let m = SplineModel::interpolate(&s, order, 1.0).unwrap();
            assert_eq!(m.coefficients(), &s);
        }
    }

    #[test]
    fn cubic_prefilter_matches_dense_oracle() {
        let s = [12.0, 250.0, 3.0, 77.0, 128.0, 128.0, 0.0, 255.0, 9.0];
        let m = SplineModel::interpolate(&s, 3, 1.0).unwrap();
        let want = cubic_oracle(&s);
        for (a, b) in m.coefficients().iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert_eq!(dense_prefilter(&s, 3).len(), s.len());
        for (a, b) in dense_prefilter(&s, 3).iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_condition_all_orders() {
        let s = [0.5, 3.0, -2.0, 7.0, 1.0, 0.0, 4.0, 4.0, -1.0, 2.0, 6.0];
        for order in 0..=7u32 {
            let m = SplineModel::interpolate(&s, order, 2.0).unwrap();
            for (k, v) in s.iter().enumerate() {
                let g = m.eval(2.0 * k as f64).unwrap();
                assert!((g - v).abs() < 1e-9, "order {order} k {k}: {g} vs {v}");
            }
        }
    }

    #[test]
    fn constant_and_ramp_rows() {
        let m = SplineModel::interpolate(&[5.0; 4], 3, 1.0).unwrap();
        for i in 0..=30 {
            assert!((m.eval(i as f64 * 0.1).unwrap() - 5.0).abs() < 1e-12);
        }
        let knots: Vec<f64> = (0..41).map(f64::from).collect();
        let ramp = SplineModel::interpolate(&knots, 3, 1.0).unwrap();
        // the mirror boundary bends the ramp near the ends; its effect decays
        // geometrically towards the middle
        for i in 150..=250 {
            let t = i as f64 * 0.1;
            assert!((ramp.eval(t).unwrap() - t).abs() < 1e-6, "t = {t}");
        }
        assert!((ramp.eval(2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(ramp.eval(f64::INFINITY).is_err());
    }

    #[test]
    fn oversample_lengths_and_identity() {
        let s = [1.0, 4.0, 2.0, 8.0, 5.0];
        let m = SplineModel::interpolate(&s, 3, 1.0).unwrap();
        let same = m.oversample(1.0).unwrap();
        assert_eq!(same.len(), s.len());
        for (a, b) in same.iter().zip(&s) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(m.oversample(0.5).unwrap().len(), 9);
        assert_eq!(m.oversample(0.005).unwrap().len(), 801);
        assert!(m.oversample(2.0).is_err());
        assert!(m.oversample(-1.0).is_err());
        let c = SplineModel::interpolate(&[5.0; 6], 3, 1.0).unwrap();
        assert!(c.oversample(0.3).unwrap().iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn amplitude_bound_sees_overshoot() {
        let m = SplineModel::interpolate(&[0.0, 0.0, 255.0, 0.0, 0.0], 3, 1.0).unwrap();
        assert!(m.amplitude_bound() >= 255.0);
        let step = SplineModel::interpolate(&[0.0, 0.0, 255.0, 255.0, 255.0], 3, 1.0).unwrap();
        assert!(step.amplitude_bound() > 255.0);
    }

    #[test]
    fn mirror_indices() {
        let n = 4;
        let got: Vec<usize> = (-4..=8).map(|k| mirror_index(k, n)).collect();
        assert_eq!(got, [2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(mirror_index(-7, 1), 0);
    }
}
