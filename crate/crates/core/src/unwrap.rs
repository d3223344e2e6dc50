//! Recovery of unfolded samples from (noisy) modulo samples with
//! higher-order differences.
//!
//! When `‖Δ^l γ‖∞` stays below `λ`, folding `Δ^l ỹ` returns `Δ^l γ` (plus the
//! differenced noise) exactly, so `Δ^l ε = M_λ(Δ^l ỹ) − Δ^l ỹ` recovers the
//! differenced residual `ε = γ − ỹ ∈ 2λℤ`. The residual is integrated back
//! in integer units of `2λ`; each integration constant except the last is
//! pinned by the amplitude bound `β_g`.

use alloc::vec::Vec;

use crate::error::{positive, Error, Result};
use crate::modulo::fold;

/// `Δ^order v`, with `Δv_k = v_{k+1} − v_k`.
pub fn forward_difference(v: &[f64], order: usize) -> Result<Vec<f64>> {
    if v.len() <= order {
        return Err(Error::TooShort {
            what: "difference input",
            needed: order + 1,
            got: v.len(),
        });
    }
    let mut out = v.to_vec();
    for _ in 0..order {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// `[v_0, (Δv)_0, …, (Δ^(order−1) v)_0]`: the initial values that make
/// [`anti_difference`] invert [`forward_difference`].
pub fn leading_values(v: &[f64], order: usize) -> Result<Vec<f64>> {
    if v.len() < order {
        return Err(Error::TooShort {
            what: "difference input",
            needed: order,
            got: v.len(),
        });
    }
    let mut cur = v.to_vec();
    let mut out = Vec::with_capacity(order);
    for _ in 0..order {
        out.push(cur[0]);
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Integrates `d` `order` times. `initial_values[j]` is the first entry of
/// the stage that produces `Δ^j v`, as returned by [`leading_values`].
pub fn anti_difference(d: &[f64], order: usize, initial_values: &[f64]) -> Result<Vec<f64>> {
    if initial_values.len() != order {
        return Err(Error::DimensionMismatch {
            what: "initial values",
            expected: order,
            got: initial_values.len(),
        });
    }
    let mut cur = d.to_vec();
    for &start in initial_values.iter().rev() {
        let mut next = Vec::with_capacity(cur.len() + 1);
        let mut acc = start;
        next.push(acc);
        for &x in &cur {
            acc += x;
            next.push(acc);
        }
        cur = next;
    }
    Ok(cur)
}

fn cumulative(d: &[i64]) -> Vec<i64> {
    let mut out = Vec::with_capacity(d.len() + 1);
    let mut acc = 0i64;
    out.push(acc);
    for &x in d {
        acc += x;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMethod {
    /// Only the unwrapping itself; the global `2λ` multiple is arbitrary.
    None,
    /// Majority-in-range over a known value interval.
    Range,
    /// A sample with a known value.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnwrapDiagnostics {
    /// `‖M_λ(Δ^l ỹ)‖∞`.
    pub max_folded_difference: f64,
    /// `‖Δ^l ỹ‖∞` before folding.
    pub max_raw_difference: f64,
    /// Share of `λ` each of `Δ^l γ` and `Δ^l e` may use: `λ/2`.
    pub difference_budget: f64,
    /// Per-sample noise budget `λ/2^(l+1)`.
    pub noise_budget: f64,
    /// Observed folded differences exceed `difference_budget`.
    pub budget_exceeded: bool,
    /// `max γ̂ − min γ̂ > 2 β_g`: an integration constant went wrong.
    pub amplitude_exceeded: bool,
    /// Constant-fixing window shorter than required.
    pub reduced_confidence: bool,
    /// Window length used for the first constant (0 when `l = 1`).
    pub window: usize,
    pub anchor: AnchorMethod,
    /// Measured `‖e‖∞` when ground truth is available to the caller.
    pub noise_bound: Option<f64>,
}

impl UnwrapDiagnostics {
    pub fn violated(&self) -> bool {
        self.budget_exceeded || self.amplitude_exceeded
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnwrapResult {
    pub gamma_hat: Vec<f64>,
    /// Global `2λ` multiple added by anchoring.
    pub offset_multiple: i64,
    pub lambda: f64,
    pub diagnostics: UnwrapDiagnostics,
}

/// Length of the window used to fix integration constants: `6⌈β_g/λ⌉`.
pub fn base_window(lambda: f64, beta_g: f64) -> usize {
    6 * libm::ceil(beta_g / lambda) as usize
}

/// Recovers `γ̂ = γ + e + 2λ c` (one unknown integer `c`) from `ỹ = M_λ(γ) + e`.
pub fn unwrap(y_tilde: &[f64], lambda: f64, l: usize, beta_g: f64) -> Result<UnwrapResult> {
    let lambda = positive("lambda", lambda)?;
    let beta_g = positive("beta_g", beta_g)?;
    if l < 1 {
        return Err(Error::InvalidParameter {
            name: "difference order",
            reason: "must be at least 1",
        });
    }
    if y_tilde.len() < l + 1 {
        return Err(Error::TooShort {
            what: "modulo sample vector",
            needed: l + 1,
            got: y_tilde.len(),
        });
    }
    if y_tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { name: "modulo sample" });
    }
    let span = 2.0 * lambda;

    let raw = forward_difference(y_tilde, l)?;
    let mut max_folded = 0.0f64;
    let mut max_raw = 0.0f64;
    // Δ^l ε in units of 2λ
    let mut stage: Vec<i64> = raw
        .iter()
        .map(|&d| {
            let f = fold(d, lambda);
            max_folded = max_folded.max(libm::fabs(f));
            max_raw = max_raw.max(libm::fabs(d));
            libm::round((f - d) / span) as i64
        })
        .collect();

    // Δ^j ỹ for j = 0..l-1, needed to fix constants
    let mut y_diffs: Vec<Vec<f64>> = Vec::with_capacity(l);
    y_diffs.push(y_tilde.to_vec());
    for j in 1..l {
        let next = forward_difference(&y_diffs[j - 1], 1)?;
        y_diffs.push(next);
    }

    let base = base_window(lambda, beta_g);
    let mut reduced_confidence = false;
    let mut first_window = 0;
    for s in (1..=l).rev() {
        // stage holds Δ^s ε; integrate to Δ^(s-1) ε with a zero start
        let mut integrated = cumulative(&stage);
        if s >= 2 {
            // A wrong constant c adds c·k to the next integral, i.e. a ramp
            // of slope 2λc in Δ^(s-2) γ̂, which the amplitude bound rules out.
            let below = &y_diffs[s - 2];
            let next = cumulative(&integrated);
            let wanted = base << (s - 2);
            let window = wanted.min(below.len() - 1).max(1);
            if window < wanted {
                reduced_confidence = true;
            }
            if first_window == 0 {
                first_window = window;
            }
            let drift = (below[window] - below[0]) + span * (next[window] - next[0]) as f64;
            let c = libm::round(-drift / (span * window as f64)) as i64;
            for v in integrated.iter_mut() {
                *v += c;
            }
        }
        stage = integrated;
    }

    let gamma_hat: Vec<f64> = y_tilde
        .iter()
        .zip(&stage)
        .map(|(&y, &e)| y + span * e as f64)
        .collect();
    let (lo, hi) = gamma_hat
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let difference_budget = lambda / 2.0;
    Ok(UnwrapResult {
        gamma_hat,
        offset_multiple: 0,
        lambda,
        diagnostics: UnwrapDiagnostics {
            max_folded_difference: max_folded,
            max_raw_difference: max_raw,
            difference_budget,
            noise_budget: lambda / libm::pow(2.0, l as f64 + 1.0),
            budget_exceeded: max_folded > difference_budget,
            amplitude_exceeded: hi - lo > 2.0 * beta_g,
            reduced_confidence,
            window: first_window,
            anchor: AnchorMethod::None,
            noise_bound: None,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorReport {
    /// Multiple of `2λ` added to every entry.
    pub multiple: i64,
    /// Entries still outside the range.
    pub outside: usize,
    /// Several multiples reach the same outside count.
    pub ambiguous: bool,
    /// No multiple puts any entry in range; the result is best effort.
    pub flagged: bool,
}

fn shift(result: &mut UnwrapResult, multiple: i64) {
    let delta = 2.0 * result.lambda * multiple as f64;
    if multiple != 0 {
        for v in result.gamma_hat.iter_mut() {
            *v += delta;
        }
    }
    result.offset_multiple += multiple;
}

/// Picks the global multiple of `2λ` that leaves the fewest entries outside
/// `[lo, hi]`; ties go to the smallest `|m|`.
pub fn anchor_to_range(result: &mut UnwrapResult, lo: f64, hi: f64) -> Result<AnchorReport> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::InvalidParameter {
            name: "anchor range",
            reason: "need finite lo <= hi",
        });
    }
    let span = 2.0 * result.lambda;
    // each entry admits the multiples in [first, last]
    let mut events: Vec<(i64, i32)> = Vec::with_capacity(2 * result.gamma_hat.len());
    for &v in &result.gamma_hat {
        let first = libm::ceil((lo - v) / span) as i64;
        let last = libm::floor((hi - v) / span) as i64;
        if first <= last {
            events.push((first, 1));
            events.push((last + 1, -1));
        }
    }
    result.diagnostics.anchor = AnchorMethod::Range;
    let total = result.gamma_hat.len();
    if events.is_empty() {
        let mean = result.gamma_hat.iter().sum::<f64>() / total as f64;
        let multiple = libm::round((0.5 * (lo + hi) - mean) / span) as i64;
        shift(result, multiple);
        return Ok(AnchorReport {
            multiple,
            outside: total,
            ambiguous: false,
            flagged: true,
        });
    }
    events.sort_unstable();

    // sweep coverage; segments [start, end) of constant coverage
    let mut best_cover = 0i64;
    let mut best: Option<i64> = None;
    let mut winners = 0u64;
    let mut cover = 0i64;
    let mut idx = 0;
    while idx < events.len() {
        let pos = events[idx].0;
        while idx < events.len() && events[idx].0 == pos {
            cover += i64::from(events[idx].1);
            idx += 1;
        }
        if idx == events.len() {
            break;
        }
        let end = events[idx].0; // exclusive
        let closest = if pos <= 0 && 0 < end {
            0
        } else if end <= 0 {
            end - 1
        } else {
            pos
        };
        let seg_len = (end - pos) as u64;
        if cover > best_cover {
            best_cover = cover;
            best = Some(closest);
            winners = seg_len;
        } else if cover == best_cover && cover > 0 {
            winners += seg_len;
            let b = best.unwrap_or(closest);
            if closest.abs() < b.abs() || (closest.abs() == b.abs() && closest < b) {
                best = Some(closest);
            }
        }
    }
    let multiple = best.unwrap_or(0);
    shift(result, multiple);
    Ok(AnchorReport {
        multiple,
        outside: total - best_cover as usize,
        ambiguous: winners > 1,
        flagged: false,
    })
}

/// Pins the global multiple with one sample of known value.
pub fn anchor_to_reference(result: &mut UnwrapResult, index: usize, value: f64) -> Result<AnchorReport> {
    let current = *result.gamma_hat.get(index).ok_or(Error::TooShort {
        what: "unwrapped samples",
        needed: index + 1,
        got: result.gamma_hat.len(),
    })?;
    if !value.is_finite() {
        return Err(Error::NonFinite { name: "reference value" });
    }
    let multiple = libm::round((value - current) / (2.0 * result.lambda)) as i64;
    shift(result, multiple);
    result.diagnostics.anchor = AnchorMethod::Reference;
    Ok(AnchorReport {
        multiple,
        outside: 0,
        ambiguous: false,
        flagged: false,
    })
}

/// `max_k |a_k − b_k − 2λc|` for the integer `c` nearest the mean offset.
pub fn lattice_deviation(a: &[f64], b: &[f64], lambda: f64) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let span = 2.0 * lambda;
    let mean = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
    let c = libm::round(mean / span);
    a.iter()
        .zip(b)
        .map(|(x, y)| libm::fabs(x - y - span * c))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::rate::uno_rate_bound;
    use crate::spline::SplineModel;

    #[test]
    fn difference_examples() {
        assert_eq!(forward_difference(&[1.0, 3.0, 6.0], 1).unwrap(), vec![2.0, 3.0]);
        assert_eq!(forward_difference(&[1.0, 3.0, 6.0, 10.0], 2).unwrap(), vec![1.0, 1.0]);
        assert_eq!(forward_difference(&[4.0; 5], 1).unwrap(), vec![0.0; 4]);
        assert!(forward_difference(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn anti_difference_examples() {
        assert_eq!(anti_difference(&[2.0, 3.0], 1, &[1.0]).unwrap(), vec![1.0, 3.0, 6.0]);
        assert_eq!(anti_difference(&[0.0; 4], 1, &[7.0]).unwrap(), vec![7.0; 5]);
        assert!(anti_difference(&[1.0], 2, &[1.0]).is_err());
        let v = [1.0, 3.0, 6.0, 10.0];
        let iv = leading_values(&v, 2).unwrap();
        assert_eq!(iv, vec![1.0, 2.0]);
        let d = forward_difference(&v, 2).unwrap();
        assert_eq!(anti_difference(&d, 2, &iv).unwrap(), v.to_vec());
    }

    #[test]
    fn in_range_signal_is_untouched() {
        let y: Vec<f64> = (0..50).map(|k| 0.5 * (k as f64 * 0.1).sin()).collect();
        let r = unwrap(&y, 1.0, 2, 0.5).unwrap();
        assert_eq!(r.gamma_hat, y);
        assert_eq!(r.offset_multiple, 0);
        assert!(!r.diagnostics.violated());
    }

    #[test]
    fn unwrap_rejects_bad_input() {
        assert!(unwrap(&[0.1, 0.2], 1.0, 2, 1.0).is_err());
        assert!(unwrap(&[0.1, 0.2, 0.3], 0.0, 2, 1.0).is_err());
        assert!(unwrap(&[0.1, 0.2, 0.3], 1.0, 0, 1.0).is_err());
        assert!(unwrap(&[0.1, f64::NAN, 0.3], 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn synthetic_spline_row_recovers_up_to_lattice() {
        let pixels = [10.0, 200.0, 255.0, 40.0, 0.0, 128.0, 90.0, 250.0];
        let model = SplineModel::interpolate(&pixels, 3, 1.0).unwrap();
        let beta = model.amplitude_bound();
        let t = 0.5 * uno_rate_bound(1.0, beta, 1.0, 2, 3).unwrap();
        let gamma = model.oversample(t).unwrap();
        let y: Vec<f64> = gamma.iter().map(|&g| fold(g, 1.0)).collect();
        let r = unwrap(&y, 1.0, 2, beta).unwrap();
        assert!(lattice_deviation(&r.gamma_hat, &gamma, 1.0) < 1e-9);
        assert!(!r.diagnostics.violated());
        // fold consistency
        for (g, v) in r.gamma_hat.iter().zip(&y) {
            assert!(libm::fabs(fold(*g, 1.0) - v) < 1e-9 || libm::fabs(libm::fabs(fold(*g, 1.0) - v) - 2.0) < 1e-9);
        }
    }

    #[test]
    fn anchor_examples() {
        let base: Vec<f64> = (0..20).map(|k| 10.0 * k as f64).collect();
        let mut r = unwrap(&base, 1.0, 1, 200.0).unwrap();
        r.gamma_hat = base.clone();
        let rep = anchor_to_range(&mut r, 0.0, 255.0).unwrap();
        assert_eq!(rep.multiple, 0);
        assert_eq!(r.gamma_hat, base);

        r.gamma_hat = base.iter().map(|v| v + 6.0).collect();
        r.offset_multiple = 0;
        let rep = anchor_to_range(&mut r, 0.0, 190.0).unwrap();
        assert_eq!(rep.multiple, -3);
        assert_eq!(rep.outside, 0);
        assert!(!rep.ambiguous);
        assert_eq!(r.offset_multiple, -3);
    }

    #[test]
    fn anchor_tie_prefers_small_multiple() {
        let mut r = unwrap(&[0.0, 0.1, 0.2], 1.0, 1, 1.0).unwrap();
        r.gamma_hat = vec![0.0, 0.5];
        let rep = anchor_to_range(&mut r, -10.0, 10.0).unwrap();
        assert_eq!(rep.multiple, 0);
        assert!(rep.ambiguous);

        // [3, 3.5] fits after shifting by -1 or -2 only: prefer -1
        r.gamma_hat = vec![3.0, 3.5];
        r.offset_multiple = 0;
        let rep = anchor_to_range(&mut r, -1.5, 1.6).unwrap();
        assert_eq!(rep.multiple, -1);
    }

    #[test]
    fn anchor_flags_impossible_range() {
        let mut r = unwrap(&[0.0, 0.1, 0.2], 1.0, 1, 1.0).unwrap();
        r.gamma_hat = vec![0.5, 0.5];
        let rep = anchor_to_range(&mut r, 0.9, 1.1).unwrap();
        assert!(rep.flagged);
        assert!(anchor_to_range(&mut r, 1.0, 0.0).is_err());
    }

    #[test]
    fn reference_anchor() {
        let mut r = unwrap(&[0.0, 0.1, 0.2], 1.0, 1, 1.0).unwrap();
        r.gamma_hat = vec![0.3, 0.5, 0.4];
        let rep = anchor_to_reference(&mut r, 0, 40.2).unwrap();
        assert_eq!(rep.multiple, 20);
        assert!((r.gamma_hat[0] - 40.3).abs() < 1e-12);
        assert!(anchor_to_reference(&mut r, 9, 0.0).is_err());
    }
}
