//! Sampling-rate bounds for unlimited one-bit sampling of order-`N` spline
//! signals, and the constants they are built from.
//!
//! All quantities are closed-form; the only series evaluation is the
//! Bohr–Favard constant `K_n = (4/π) Σ_j ((-1)^j / (2j+1))^(n+1)`.

use core::f64::consts::{E, PI};

use crate::error::{positive, Error, Result};

/// Largest Favard index accepted. Past this `K_n` equals `4/π` to double
/// precision.
pub const MAX_FAVARD_INDEX: u32 = 16;

/// Number of leading series terms (or term pairs) summed explicitly before
/// the Euler–Maclaurin tail takes over.
const DIRECT_TERMS: u32 = 64;

/// Euler–Maclaurin tail `Σ_{x≥J} (a x + b)^(-p)` without the integral part.
fn em_correction(a: f64, b: f64, p: f64, start: f64) -> f64 {
    let u = a * start + b;
    let f = libm::pow(u, -p);
    // f^(k)(J) = (-1)^k p(p+1)…(p+k-1) a^k u^(-p-k)
    let d1 = -p * a * f / u;
    let d3 = -p * (p + 1.0) * (p + 2.0) * a * a * a * f / (u * u * u);
    let d5 = -p * (p + 1.0) * (p + 2.0) * (p + 3.0) * (p + 4.0) * libm::pow(a, 5.0) * f
        / libm::pow(u, 5.0);
    f / 2.0 - d1 / 12.0 + d3 / 720.0 - d5 / 30240.0
}

/// Bohr–Favard constant `K_n`.
pub fn favard_constant(n: u32) -> Result<f64> {
    if n > MAX_FAVARD_INDEX {
        return Err(Error::InvalidParameter {
            name: "favard index",
            reason: "must be at most 16",
        });
    }
    let p = f64::from(n + 1);
    let start = f64::from(DIRECT_TERMS);
    let sum = if (n + 1) % 2 == 0 {
        // all terms positive: Σ (2j+1)^(-p)
        let head: f64 = (0..DIRECT_TERMS)
            .map(|j| libm::pow(2.0 * f64::from(j) + 1.0, -p))
            .sum();
        let integral = libm::pow(2.0 * start + 1.0, 1.0 - p) / (2.0 * (p - 1.0));
        head + integral + em_correction(2.0, 1.0, p, start)
    } else {
        // alternating: pair up as Σ [(4i+1)^(-p) - (4i+3)^(-p)]
        let head: f64 = (0..DIRECT_TERMS)
            .map(|i| {
                let i = f64::from(i);
                libm::pow(4.0 * i + 1.0, -p) - libm::pow(4.0 * i + 3.0, -p)
            })
            .sum();
        let (lo, hi) = (4.0 * start + 1.0, 4.0 * start + 3.0);
        let integral = if n == 0 {
            libm::log(hi / lo) / 4.0
        } else {
            (libm::pow(lo, 1.0 - p) - libm::pow(hi, 1.0 - p)) / (4.0 * (p - 1.0))
        };
        head + integral + em_correction(4.0, 1.0, p, start) - em_correction(4.0, 3.0, p, start)
    };
    Ok(4.0 / PI * sum)
}

fn check_orders(l: u32, order: u32) -> Result<()> {
    if l < 1 {
        return Err(Error::InvalidParameter {
            name: "difference order",
            reason: "must be at least 1",
        });
    }
    if l > order {
        return Err(Error::InvalidParameter {
            name: "difference order",
            reason: "must not exceed the spline order",
        });
    }
    if order > MAX_FAVARD_INDEX {
        return Err(Error::InvalidParameter {
            name: "spline order",
            reason: "must be at most 16",
        });
    }
    Ok(())
}

/// `E_(l,N) = K_(N-l) / K_N`.
pub fn excess_ratio(l: u32, order: u32) -> Result<f64> {
    check_orders(l, order)?;
    Ok(favard_constant(order - l)? / favard_constant(order)?)
}

fn rate_bound(lambda: f64, beta_g: f64, h: f64, l: u32, order: u32, split: f64) -> Result<f64> {
    let lambda = positive("lambda", lambda)?;
    let beta_g = positive("beta_g", beta_g)?;
    let h = positive("h", h)?;
    let ratio = excess_ratio(l, order)?;
    let base = lambda / (split * beta_g * ratio);
    Ok(h / (PI * E) * libm::pow(base, 1.0 / f64::from(l)))
}

/// Largest sampling period for which one-bit modulo recovery is guaranteed:
/// `(h/πe) (λ / (2 β_g E_(l,N)))^(1/l)`.
pub fn uno_rate_bound(lambda: f64, beta_g: f64, h: f64, l: u32, order: u32) -> Result<f64> {
    rate_bound(lambda, beta_g, h, l, order, 2.0)
}

/// Same bound for noiseless modulo samples (no factor two under the root).
pub fn classic_rate_bound(lambda: f64, beta_g: f64, h: f64, l: u32, order: u32) -> Result<f64> {
    rate_bound(lambda, beta_g, h, l, order, 1.0)
}

/// Upper bound on `‖Δ^l γ‖∞` for samples `γ_k = g(kT)` of an order-`N`
/// spline with `‖g‖∞ ≤ g_inf`: `(Tπe/h)^l E_(l,N) g_inf`.
pub fn difference_bound(period: f64, h: f64, l: u32, order: u32, g_inf: f64) -> Result<f64> {
    let period = positive("sampling period", period)?;
    let h = positive("h", h)?;
    if !g_inf.is_finite() {
        return Err(Error::NonFinite { name: "g_inf" });
    }
    if g_inf < 0.0 {
        return Err(Error::InvalidParameter {
            name: "g_inf",
            reason: "must be non-negative",
        });
    }
    let ratio = excess_ratio(l, order)?;
    Ok(libm::pow(period * PI * E / h, f64::from(l)) * ratio * g_inf)
}

/// Per-sample error a one-bit reconstruction may leave in the modulo samples
/// before order-`l` unwrapping can fail: `λ / 2^(l+1)`.
pub fn error_budget(lambda: f64, l: u32) -> Result<f64> {
    let lambda = positive("lambda", lambda)?;
    if l < 1 {
        return Err(Error::InvalidParameter {
            name: "difference order",
            reason: "must be at least 1",
        });
    }
    Ok(lambda / libm::pow(2.0, f64::from(l) + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCertificate {
    pub lambda: f64,
    pub beta_g: f64,
    pub h: f64,
    pub l: u32,
    pub order: u32,
    pub period: f64,
    pub t_max_uno: f64,
    pub t_max_classic: f64,
    pub error_budget: f64,
    /// `period < t_max_uno`, strictly.
    pub satisfied: bool,
}

pub fn certify(
    lambda: f64,
    beta_g: f64,
    h: f64,
    l: u32,
    order: u32,
    period: f64,
) -> Result<RateCertificate> {
    let period = positive("sampling period", period)?;
    let t_max_uno = uno_rate_bound(lambda, beta_g, h, l, order)?;
    let t_max_classic = classic_rate_bound(lambda, beta_g, h, l, order)?;
    Ok(RateCertificate {
        lambda,
        beta_g,
        h,
        l,
        order,
        period,
        t_max_uno,
        t_max_classic,
        error_budget: error_budget(lambda, l)?,
        satisfied: period < t_max_uno,
    })
}
