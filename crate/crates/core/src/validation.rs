//! Dominance checks, expected utility and budget pricing.

use serde::Serialize;

use crate::market::Kernel;
use crate::numerics::{for_each_probit_node, norm_cdf, norm_quantile, quad, NumericsError, EPS, FULL_PANELS, SUB_PANELS};
use crate::quantile::Quantile;
use crate::utility::Utility;

/// Number of verification ranks used by default.
pub const VERIFY_RANKS: usize = 10_000;
/// Default feasibility tolerance, relative to the local scale.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceReport {
    pub order: Order,
    pub feasible: bool,
    /// Largest shortfall divided by the local scale; `feasible` iff it is at most `tolerance`.
    pub worst_violation: f64,
    pub worst_location: f64,
    pub tolerance: f64,
}

/// Pointwise comparison `Q(s) >= Q0(s)` on `n` midpoint ranks plus `n` ranks
/// uniform in probit space over `[EPS, 1 - EPS]`, which reach the tails the
/// integrals see. The shortfall at `s` is scaled by `max(1, |Q0(s)|)`.
pub fn check_fsd(q: &impl Quantile, q0: &impl Quantile, n: usize, tol: f64) -> DominanceReport {
    let (za, zb) = (norm_quantile(EPS), norm_quantile(1.0 - EPS));
    let mid = (0..n).map(|i| (i as f64 + 0.5) / n as f64);
    let tails = (0..n).map(|i| norm_cdf(za + (zb - za) * (i as f64 + 0.5) / n as f64));
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0.5;
    for s in mid.chain(tails) {
        let b = q0.value(s);
        let v = (b - q.value(s)) / b.abs().max(1.0);
        if v > worst || v.is_nan() {
            worst = v;
            at = s;
            if v.is_nan() {
                break;
            }
        }
    }
    let worst = if worst.is_nan() { f64::INFINITY } else { worst.max(0.0) };
    DominanceReport { order: Order::First, feasible: worst <= tol, worst_violation: worst, worst_location: at, tolerance: tol }
}

/// Cut points for cumulative integrals: `n` uniform ranks merged with the
/// break points of both quantiles.
fn cuts(n: usize, extra: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = (1..n).map(|j| j as f64 / n as f64).collect();
    c.extend(extra.iter().copied().filter(|&b| b > 0.0 && b < 1.0));
    c.push(1.0);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Running integrals `int_0^{c_j} f` over the given cut points.
fn running_integral(f: impl Fn(f64) -> f64, cuts: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(cuts.len());
    let mut acc = 0.0;
    let mut lo = 0.0;
    for &c in cuts {
        for_each_probit_node(lo, c, 1, |t, w| acc += w * f(t));
        out.push(acc);
        lo = c;
    }
    out
}

/// Cumulative integrals at one cut rank of an SSD comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub rank: f64,
    /// `int_0^rank (Q0 - Q)`
    pub gap: f64,
    /// `int_0^rank Q0`
    pub base: f64,
}

/// Cumulative gaps at `n` uniform ranks plus every break point of either quantile.
pub fn ssd_profile(q: &impl Quantile, q0: &impl Quantile, n: usize) -> Vec<ProfilePoint> {
    let mut extra = q.breaks();
    extra.extend(q0.breaks());
    let c = cuts(n, &extra);
    let gap = running_integral(|s| q0.value(s) - q.value(s), &c);
    let base = running_integral(|s| q0.value(s), &c);
    c.iter().zip(gap).zip(base).map(|((&rank, gap), base)| ProfilePoint { rank, gap, base }).collect()
}

/// Cumulative comparison `int_0^t Q >= int_0^t Q0` on the [`ssd_profile`] ranks.
/// Shortfalls are scaled by `1 + |int_0^t Q0|`.
pub fn check_ssd(q: &impl Quantile, q0: &impl Quantile, n: usize, tol: f64) -> DominanceReport {
    let mut worst = 0.0;
    let mut at = 0.5;
    for p in ssd_profile(q, q0, n) {
        let v = p.gap / (1.0 + p.base.abs());
        if v > worst || v.is_nan() {
            worst = if v.is_nan() { f64::INFINITY } else { v };
            at = p.rank;
        }
    }
    DominanceReport { order: Order::Second, feasible: worst <= tol, worst_violation: worst, worst_location: at, tolerance: tol }
}

fn split_integral(f: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    let inner: Vec<f64> = breaks.iter().copied().filter(|&b| b > 0.0 && b < 1.0).collect();
    let panels = if inner.is_empty() {
        FULL_PANELS
    } else if inner.len() <= 16 {
        SUB_PANELS.max(FULL_PANELS / inner.len())
    } else {
        2
    };
    quad(f, 0.0, 1.0, &inner, panels)
}

/// Expected utility `int_0^1 U(Q(s)) ds`.
pub fn objective_value(q: &impl Quantile, u: &Utility) -> Result<f64, NumericsError> {
    let v = split_integral(|s| u.value(q.value(s)), &q.breaks());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumericsError::NonFiniteIntegrand { at: f64::NAN })
    }
}

/// Price `int_0^1 Q(s) Q_rho(1 - s) ds`.
pub fn budget_value(q: &impl Quantile, kernel: &Kernel) -> Result<f64, NumericsError> {
    let v = split_integral(|s| q.value(s) * kernel.q(1.0 - s), &q.breaks());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumericsError::NonFiniteIntegrand { at: f64::NAN })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::QuantileSpec;

    #[test]
    fn reflexive_and_shifted() {
        let q0 = QuantileSpec::Lognormal { mu: 3.0, sigma: 1.0, shift: 0.0 };
        assert!(check_fsd(&q0, &q0, VERIFY_RANKS, DEFAULT_TOL).feasible);
        assert_eq!(check_fsd(&q0, &q0, VERIFY_RANKS, DEFAULT_TOL).worst_violation, 0.0);
        let u = QuantileSpec::Affine { slope: 1.0, intercept: 0.0 };
        let down = QuantileSpec::Affine { slope: 1.0, intercept: -1.0 };
        let r = check_fsd(&down, &u, VERIFY_RANKS, DEFAULT_TOL);
        assert!(!r.feasible);
        assert!((r.worst_violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_preserving_spread() {
        let narrow = QuantileSpec::Affine { slope: 1.0, intercept: 0.0 };
        let wide = QuantileSpec::Affine { slope: 2.0, intercept: -0.5 };
        assert!(!check_ssd(&wide, &narrow, VERIFY_RANKS, DEFAULT_TOL).feasible);
        assert!(check_ssd(&narrow, &wide, VERIFY_RANKS, DEFAULT_TOL).feasible);
        // gap int_0^t (t' - (2t' - 1/2)) = (t - t^2)/2 against base t^2/2
        let r = check_ssd(&wide, &narrow, VERIFY_RANKS, DEFAULT_TOL);
        let oracle = (1..VERIFY_RANKS)
            .map(|j| j as f64 / VERIFY_RANKS as f64)
            .map(|t| 0.5 * (t - t * t) / (1.0 + 0.5 * t * t))
            .fold(0.0, f64::max);
        assert!((r.worst_violation - oracle).abs() < 1e-12);
    }

    #[test]
    fn log_of_one_is_zero() {
        let u = Utility::new(crate::utility::UtilitySpec::Log).unwrap();
        let one = QuantileSpec::Affine { slope: 0.0, intercept: 1.0 };
        assert!(objective_value(&one, &u).unwrap().abs() < 1e-14);
    }
}
