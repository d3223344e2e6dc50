//! Unlimited one-bit sampling of spline-space signals.
//!
//! Signals are folded into `[-λ, λ)`, reduced to sign bits against uniform
//! random thresholds, and recovered in two steps: a randomized Kaczmarz
//! solve for the modulo samples, then higher-order-difference unwrapping.
//! [`rate`] evaluates the sampling-period bound under which this works.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod error;
pub mod modulo;
pub mod onebit;
pub mod pipeline;
pub mod rate;
pub mod rka;
pub mod spline;
pub mod unwrap;

pub use error::{Error, Result};
pub use modulo::{fold, modulo_fold, modulo_sample, residual, ModuloSampleVector};
pub use onebit::{
    generate_dithers, quantize, quantize_seeded, violation, DitherPlan, DitherSource,
    OneBitCapture, RowMeta, SignMatrix, ThresholdMatrix,
};
pub use pipeline::{decode_row, encode_row, nmse, Crop, DecodedRow, ExperimentSpec, RowFlags};
pub use rate::{certify, RateCertificate};
pub use rka::{solve, Init, Solution, SolveTrace, SolverConfig};
pub use spline::{bspline, SplineModel};
pub use unwrap::{anchor_to_range, unwrap, UnwrapResult};
