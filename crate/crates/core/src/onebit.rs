//! Dithered one-bit capture of modulo samples.
//!
//! Every coordinate `k` is compared against `m` thresholds `Γ[k][ℓ]`, giving
//! the sign matrix `R[k][ℓ] = sgn(y_k - Γ[k][ℓ])`. Each bit is one
//! half-line constraint `R[k][ℓ] y_k ≥ R[k][ℓ] Γ[k][ℓ]` on a single
//! coordinate, so the stacked constraint matrix is never built.

use alloc::borrow::Cow;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{positive, Error, Result};
use crate::modulo::ModuloSampleVector;

/// Identifier of the threshold generator: ChaCha8 keyed by the plan seed,
/// one stream per threshold sequence, 53-bit uniform mantissas.
pub const GENERATOR_ID: &str = "chacha8-seqstream-u53/v1";

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed and a list of counters
/// (row index, trial index, ...), independent of processing order.
pub fn split_seed(master: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(mix64(master), |acc, &c| mix64(acc ^ mix64(c.wrapping_add(0x632b_e59b_d9b4_e019))))
}

fn chacha_from_seed(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = mix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform draw in `[0, 1)` from the top 53 bits.
#[inline]
fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Recipe for the threshold matrix of one capture.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherPlan {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub seed: u64,
    pub generator_id: String,
}

impl DitherPlan {
    pub fn new(n: usize, m: usize, lambda: f64, seed: u64) -> Self {
        Self {
            n,
            m,
            lambda,
            seed,
            generator_id: GENERATOR_ID.to_string(),
        }
    }
}

/// Row-major `n × m` matrix of thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl ThresholdMatrix {
    pub fn from_vec(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::EmptyCapture);
        }
        if data.len() != n * m {
            return Err(Error::DimensionMismatch {
                what: "threshold matrix",
                expected: n * m,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { name: "threshold" });
        }
        Ok(Self { n, m, data })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.data[k * self.m + l]
    }

    /// Thresholds applied to coordinate `k`.
    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.m..(k + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Draws `Γ`: i.i.d. uniform on `[-λ, λ)`, reproducible from the plan.
///
/// Column `ℓ` is stream `ℓ` of the ChaCha8 generator keyed by the seed, so a
/// plan with more sequences extends (not reshuffles) one with fewer.
pub fn generate_dithers(plan: &DitherPlan) -> Result<ThresholdMatrix> {
    if plan.n == 0 || plan.m == 0 {
        return Err(Error::InvalidParameter {
            name: "dither plan",
            reason: "dimensions must be positive",
        });
    }
    let lambda = positive("lambda", plan.lambda)?;
    if plan.generator_id != GENERATOR_ID {
        return Err(Error::InvalidParameter {
            name: "generator_id",
            reason: "unknown threshold generator",
        });
    }
    let (n, m) = (plan.n, plan.m);
    let mut data = vec![0.0; n * m];
    let mut rng = chacha_from_seed(plan.seed);
    for l in 0..m {
        rng.set_stream(l as u64);
        rng.set_word_pos(0);
        for k in 0..n {
            data[k * m + l] = lambda * (2.0 * unit_interval(rng.next_u64()) - 1.0);
        }
    }
    Ok(ThresholdMatrix { n, m, data })
}

/// Bit-packed `n × m` sign matrix. Row `k` occupies `ceil(m/8)` bytes; entry
/// `ℓ` is bit `ℓ % 8` (least significant first) of byte `ℓ / 8`, with 1
/// meaning `+1`. Padding bits are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    n: usize,
    m: usize,
    bytes: Vec<u8>,
}

impl SignMatrix {
    pub fn row_stride(m: usize) -> usize {
        m.div_ceil(8)
    }

    /// All entries `-1`.
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            bytes: vec![0; n * Self::row_stride(m)],
        }
    }

    pub fn from_packed(n: usize, m: usize, bytes: Vec<u8>) -> Result<Self> {
        let stride = Self::row_stride(m);
        if bytes.len() != n * stride {
            return Err(Error::DimensionMismatch {
                what: "packed sign matrix",
                expected: n * stride,
                got: bytes.len(),
            });
        }
        if m % 8 != 0 {
            let pad_mask = !((1u8 << (m % 8)) - 1);
            if bytes.chunks(stride).any(|row| row[stride - 1] & pad_mask != 0) {
                return Err(Error::InvalidParameter {
                    name: "packed sign matrix",
                    reason: "padding bits must be zero",
                });
            }
        }
        Ok(Self { n, m, bytes })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn packed(&self) -> &[u8] {
        &self.bytes
    }

    #[inline]
    pub fn is_positive(&self, k: usize, l: usize) -> bool {
        let byte = self.bytes[k * Self::row_stride(self.m) + l / 8];
        byte >> (l % 8) & 1 == 1
    }

    /// `±1` entry.
    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        if self.is_positive(k, l) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn set(&mut self, k: usize, l: usize, positive: bool) {
        let idx = k * Self::row_stride(self.m) + l / 8;
        let bit = 1u8 << (l % 8);
        if positive {
            self.bytes[idx] |= bit;
        } else {
            self.bytes[idx] &= !bit;
        }
    }
}

/// Where a capture's thresholds come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DitherSource {
    Seeded(DitherPlan),
    Explicit(ThresholdMatrix),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RowMeta {
    pub row_index: u32,
    /// Pixel count of the source row (not the oversampled length).
    pub row_length: u32,
    pub image_id: String,
}

/// The stored acquisition of one row: sign bits plus what is needed to
/// rebuild the thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBitCapture {
    bits: SignMatrix,
    dither: DitherSource,
    lambda: f64,
    period: f64,
    row_meta: RowMeta,
}

impl OneBitCapture {
    pub fn from_parts(
        bits: SignMatrix,
        dither: DitherSource,
        lambda: f64,
        period: f64,
        row_meta: RowMeta,
    ) -> Result<Self> {
        let lambda = positive("lambda", lambda)?;
        let period = positive("sampling period", period)?;
        if bits.rows() == 0 || bits.cols() == 0 {
            return Err(Error::EmptyCapture);
        }
        let (n, m) = match &dither {
            DitherSource::Seeded(p) => (p.n, p.m),
            DitherSource::Explicit(g) => (g.rows(), g.cols()),
        };
        if n != bits.rows() {
            return Err(Error::DimensionMismatch {
                what: "capture rows",
                expected: bits.rows(),
                got: n,
            });
        }
        if m != bits.cols() {
            return Err(Error::DimensionMismatch {
                what: "capture threshold sequences",
                expected: bits.cols(),
                got: m,
            });
        }
        if let DitherSource::Seeded(p) = &dither {
            if p.lambda != lambda {
                return Err(Error::ParameterMismatch { name: "lambda" });
            }
        }
        Ok(Self {
            bits,
            dither,
            lambda,
            period,
            row_meta,
        })
    }

    pub fn with_row_meta(mut self, row_meta: RowMeta) -> Self {
        self.row_meta = row_meta;
        self
    }

    pub fn bits(&self) -> &SignMatrix {
        &self.bits
    }

    pub fn dither(&self) -> &DitherSource {
        &self.dither
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn row_meta(&self) -> &RowMeta {
        &self.row_meta
    }

    /// Samples per row.
    pub fn n(&self) -> usize {
        self.bits.rows()
    }

    /// Threshold sequences.
    pub fn m(&self) -> usize {
        self.bits.cols()
    }

    /// `Γ`, regenerated from the seed when it is not stored.
    pub fn thresholds(&self) -> Result<Cow<'_, ThresholdMatrix>> {
        match &self.dither {
            DitherSource::Seeded(plan) => generate_dithers(plan).map(Cow::Owned),
            DitherSource::Explicit(g) => Ok(Cow::Borrowed(g)),
        }
    }
}

fn sign_bits(y: &[f64], gamma: &ThresholdMatrix) -> Result<SignMatrix> {
    if gamma.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "thresholds vs samples",
            expected: y.len(),
            got: gamma.rows(),
        });
    }
    let mut bits = SignMatrix::new(gamma.rows(), gamma.cols());
    for (k, &yk) in y.iter().enumerate() {
        for (l, &tau) in gamma.row(k).iter().enumerate() {
            // sgn(0) = +1
            if yk >= tau {
                bits.set(k, l, true);
            }
        }
    }
    Ok(bits)
}

/// One-bit quantization against an explicit threshold matrix; the capture
/// stores `Γ`.
pub fn quantize(y: &ModuloSampleVector, gamma: &ThresholdMatrix) -> Result<OneBitCapture> {
    let bits = sign_bits(y.values(), gamma)?;
    OneBitCapture::from_parts(
        bits,
        DitherSource::Explicit(gamma.clone()),
        y.lambda(),
        y.period(),
        RowMeta::default(),
    )
}

/// One-bit quantization against the thresholds of `plan`; the capture stores
/// only the plan.
pub fn quantize_seeded(y: &ModuloSampleVector, plan: &DitherPlan) -> Result<OneBitCapture> {
    if plan.n != y.len() {
        return Err(Error::DimensionMismatch {
            what: "dither plan vs samples",
            expected: y.len(),
            got: plan.n,
        });
    }
    let gamma = generate_dithers(plan)?;
    let bits = sign_bits(y.values(), &gamma)?;
    OneBitCapture::from_parts(
        bits,
        DitherSource::Seeded(plan.clone()),
        y.lambda(),
        y.period(),
        RowMeta::default(),
    )
}

/// Largest violated amount `max (R[k][ℓ] (Γ[k][ℓ] - ŷ_k))⁺` over every
/// constraint; zero iff `ŷ` lies in the one-bit polyhedron.
pub fn violation(capture: &OneBitCapture, y_hat: &[f64]) -> Result<f64> {
    let gamma = capture.thresholds()?;
    violation_with(capture.bits(), &gamma, y_hat)
}

pub fn violation_with(bits: &SignMatrix, gamma: &ThresholdMatrix, y_hat: &[f64]) -> Result<f64> {
    if y_hat.len() != bits.rows() {
        return Err(Error::DimensionMismatch {
            what: "estimate",
            expected: bits.rows(),
            got: y_hat.len(),
        });
    }
    let mut worst = 0.0f64;
    for (k, &yk) in y_hat.iter().enumerate() {
        for (l, &tau) in gamma.row(k).iter().enumerate() {
            let r = bits.get(k, l);
            worst = worst.max(r * (tau - yk));
        }
    }
    Ok(worst)
}

/// Per-coordinate bounds implied by the bits: `y_k ≥ lower`, `y_k ≤ upper`.
/// Missing sides are infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateBounds {
    pub lower: f64,
    pub upper: f64,
}

impl CoordinateBounds {
    /// Distance from `v` to the interval.
    #[inline]
    pub fn excess(&self, v: f64) -> f64 {
        (self.lower - v).max(v - self.upper).max(0.0)
    }

    /// Interval clipped to `[-λ, λ]`.
    pub fn clipped(&self, lambda: f64) -> (f64, f64) {
        (self.lower.max(-lambda), self.upper.min(lambda))
    }

    pub fn midpoint(&self, lambda: f64) -> f64 {
        let (lo, hi) = self.clipped(lambda);
        0.5 * (lo + hi)
    }
}

pub fn coordinate_bounds(bits: &SignMatrix, gamma: &ThresholdMatrix) -> Vec<CoordinateBounds> {
    (0..bits.rows())
        .map(|k| {
            let mut b = CoordinateBounds {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            };
            for (l, &tau) in gamma.row(k).iter().enumerate() {
                if bits.is_positive(k, l) {
                    b.lower = b.lower.max(tau);
                } else {
                    b.upper = b.upper.min(tau);
                }
            }
            b
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(v: &[f64]) -> ModuloSampleVector {
        ModuloSampleVector::new(v.to_vec(), 1.0, 0.01).unwrap()
    }

    #[test]
    fn sign_examples() {
        let gamma = ThresholdMatrix::from_vec(3, 1, alloc::vec![0.2, 0.2, 0.3]).unwrap();
        let cap = quantize(&samples(&[0.5, -0.5, 0.3]), &gamma).unwrap();
        assert_eq!(cap.bits().get(0, 0), 1.0);
        assert_eq!(cap.bits().get(1, 0), -1.0);
        assert_eq!(cap.bits().get(2, 0), 1.0);
    }

    #[test]
    fn dithers_reproducible_and_in_range() {
        let plan = DitherPlan::new(50, 7, 2.0, 99);
        let a = generate_dithers(&plan).unwrap();
        let b = generate_dithers(&plan).unwrap();
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|v| (-2.0..=2.0).contains(v)));
        let other = generate_dithers(&DitherPlan::new(50, 7, 2.0, 100)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn more_sequences_extend_fewer() {
        let small = generate_dithers(&DitherPlan::new(20, 3, 1.0, 5)).unwrap();
        let big = generate_dithers(&DitherPlan::new(20, 9, 1.0, 5)).unwrap();
        for k in 0..20 {
            assert_eq!(small.row(k), &big.row(k)[..3]);
        }
    }

    #[test]
    fn dither_plan_errors() {
        assert!(generate_dithers(&DitherPlan::new(0, 3, 1.0, 1)).is_err());
        assert!(generate_dithers(&DitherPlan::new(3, 0, 1.0, 1)).is_err());
        assert!(generate_dithers(&DitherPlan::new(3, 3, 0.0, 1)).is_err());
        let mut p = DitherPlan::new(3, 3, 1.0, 1);
        p.generator_id = "xorshift".into();
        assert!(generate_dithers(&p).is_err());
    }

    #[test]
    fn quantize_dimension_mismatch() {
        let gamma = ThresholdMatrix::from_vec(2, 2, alloc::vec![0.0; 4]).unwrap();
        assert!(quantize(&samples(&[0.1]), &gamma).is_err());
        assert!(quantize_seeded(&samples(&[0.1]), &DitherPlan::new(2, 2, 1.0, 0)).is_err());
    }

    #[test]
    fn violation_zero_at_truth_and_scan() {
        let y = samples(&[0.4, -0.7, 0.05, 0.9]);
        let plan = DitherPlan::new(4, 30, 1.0, 11);
        let cap = quantize_seeded(&y, &plan).unwrap();
        assert_eq!(violation(&cap, y.values()).unwrap(), 0.0);

        // push one entry across its nearest threshold by 0.1
        let gamma = cap.thresholds().unwrap();
        let b = coordinate_bounds(cap.bits(), &gamma)[0];
        let mut moved = y.values().to_vec();
        moved[0] = b.upper + 0.1;
        let v = violation(&cap, &moved).unwrap();
        assert!((v - 0.1).abs() < 1e-12, "{v}");
        assert!(violation(&cap, &[0.0]).is_err());
    }

    #[test]
    fn empty_capture_rejected() {
        assert!(ThresholdMatrix::from_vec(3, 0, alloc::vec![]).is_err());
        let r = OneBitCapture::from_parts(
            SignMatrix::new(3, 0),
            DitherSource::Seeded(DitherPlan::new(3, 0, 1.0, 0)),
            1.0,
            0.1,
            RowMeta::default(),
        );
        assert_eq!(r, Err(Error::EmptyCapture));
    }

    #[test]
    fn packed_layout() {
        let mut s = SignMatrix::new(2, 10);
        s.set(0, 0, true);
        s.set(0, 9, true);
        s.set(1, 3, true);
        assert_eq!(s.packed(), &[0x01, 0x02, 0x08, 0x00]);
        assert!(SignMatrix::from_packed(2, 10, alloc::vec![0, 0x04, 0, 0]).is_err());
        assert!(SignMatrix::from_packed(2, 10, alloc::vec![0, 0, 0]).is_err());
        assert_eq!(SignMatrix::from_packed(2, 10, s.packed().to_vec()).unwrap(), s);
    }

    #[test]
    fn split_seed_depends_on_counters() {
        let a = split_seed(7, &[0, 0]);
        assert_ne!(a, split_seed(7, &[1, 0]));
        assert_ne!(a, split_seed(7, &[0, 1]));
        assert_ne!(split_seed(7, &[1, 0]), split_seed(7, &[0, 1]));
        assert_eq!(a, split_seed(7, &[0, 0]));
    }
}
