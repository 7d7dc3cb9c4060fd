//! Quantile functions on (0,1): parametric benchmark families, tabulated
//! quantiles and the piecewise solution quantiles built by the solvers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::Kernel;
use crate::numerics::{for_each_probit_node, norm_quantile, Grid, NumericsError, FULL_PANELS};
use crate::utility::Utility;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantileError {
    #[error("rank {0} is outside (0,1)")]
    OutOfDomain(f64),
    #[error("invalid quantile parameters: {0}")]
    Parameters(String),
    #[error("quantile decreases between ranks {lo} and {hi}")]
    NotMonotone { lo: f64, hi: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Anything that can be evaluated as a quantile function.
pub trait Quantile {
    /// Value at rank `s`; callers guarantee `s` lies in (0,1).
    fn value(&self, s: f64) -> f64;

    /// Value at rank `s` when `z = Phi^-1(s)` is already known.
    fn value_z(&self, s: f64, _z: f64) -> f64 {
        self.value(s)
    }

    /// Ranks where the function may jump or kink. Integration splits there.
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }

    fn eval(&self, s: f64) -> Result<f64, QuantileError> {
        if s > 0.0 && s < 1.0 {
            Ok(self.value(s))
        } else {
            Err(QuantileError::OutOfDomain(s))
        }
    }
}

impl<Q: Quantile + ?Sized> Quantile for &Q {
    fn value(&self, s: f64) -> f64 {
        (**self).value(s)
    }
    fn value_z(&self, s: f64, z: f64) -> f64 {
        (**self).value_z(s, z)
    }
    fn breaks(&self) -> Vec<f64> {
        (**self).breaks()
    }
}

/// Parametric benchmark descriptor as it appears in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum QuantileSpec {
    /// `exp(sigma * Phi^-1(t) + mu) + shift`
    Lognormal {
        mu: f64,
        sigma: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `sigma * Phi^-1(t) + mu`
    Normal { mu: f64, sigma: f64 },
    /// `-ln(1 - t) / rate + shift`
    Exponential {
        rate: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `slope * t + intercept`
    #[serde(alias = "uniform")]
    Affine { slope: f64, intercept: f64 },
    /// `sum c_i t^i`
    Polynomial { coefficients: Vec<f64> },
    /// Linear interpolation of `(rank, value)` knots, constant beyond the ends.
    Piecewise { ranks: Vec<f64>, values: Vec<f64> },
}

impl QuantileSpec {
    pub fn validate(&self) -> Result<(), QuantileError> {
        let bad = |m: &str| Err(QuantileError::Parameters(m.to_string()));
        match self {
            QuantileSpec::Lognormal { sigma, .. } | QuantileSpec::Normal { sigma, .. } if !(*sigma > 0.0) => {
                return bad("sigma must be positive")
            }
            QuantileSpec::Exponential { rate, .. } if !(*rate > 0.0) => return bad("rate must be positive"),
            QuantileSpec::Polynomial { coefficients } if coefficients.is_empty() => {
                return bad("at least one coefficient is required")
            }
            QuantileSpec::Piecewise { ranks, values } => {
                if ranks.is_empty() || ranks.len() != values.len() {
                    return bad("ranks and values must be non-empty and of equal length");
                }
                if ranks.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("ranks must be strictly increasing");
                }
            }
            _ => {}
        }
        check_monotone(self, 1000)
    }
}

/// Grid check that `q` is nondecreasing.
pub fn check_monotone(q: &impl Quantile, n: usize) -> Result<(), QuantileError> {
    let mut prev: Option<(f64, f64)> = None;
    for i in 1..n {
        let s = i as f64 / n as f64;
        let v = q.value(s);
        if let Some((ps, pv)) = prev {
            if v < pv - 1e-10 * pv.abs().max(1.0) {
                return Err(QuantileError::NotMonotone { lo: ps, hi: s });
            }
        }
        prev = Some((s, v));
    }
    Ok(())
}

impl Quantile for QuantileSpec {
    fn value(&self, s: f64) -> f64 {
        match self {
            QuantileSpec::Lognormal { mu, sigma, shift } => (sigma * norm_quantile(s) + mu).exp() + shift,
            QuantileSpec::Normal { mu, sigma } => sigma * norm_quantile(s) + mu,
            QuantileSpec::Exponential { rate, shift } => -(-s).ln_1p() / rate + shift,
            QuantileSpec::Affine { slope, intercept } => slope * s + intercept,
            QuantileSpec::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c),
            QuantileSpec::Piecewise { ranks, values } => interpolate(ranks, values, s),
        }
    }

    fn value_z(&self, s: f64, z: f64) -> f64 {
        match self {
            QuantileSpec::Lognormal { mu, sigma, shift } => (sigma * z + mu).exp() + shift,
            QuantileSpec::Normal { mu, sigma } => sigma * z + mu,
            _ => self.value(s),
        }
    }

    fn breaks(&self) -> Vec<f64> {
        match self {
            QuantileSpec::Piecewise { ranks, .. } => ranks.clone(),
            _ => Vec::new(),
        }
    }
}

fn interpolate(ranks: &[f64], values: &[f64], s: f64) -> f64 {
    let k = ranks.partition_point(|&r| r <= s);
    if k == 0 {
        return values[0];
    }
    if k == ranks.len() {
        return values[k - 1];
    }
    let (r0, r1) = (ranks[k - 1], ranks[k]);
    values[k - 1] + (values[k] - values[k - 1]) * (s - r0) / (r1 - r0)
}

/// `x_{Q0} = int_0^1 Q0(s) Q_rho(1-s) ds`, the cheapest budget that replicates `q0`.
pub fn minimal_budget(q0: &impl Quantile, kernel: &Kernel) -> Result<f64, QuantileError> {
    let breaks: Vec<f64> = q0.breaks().into_iter().map(|b| 1.0 - b).collect();
    let v = integrate_split(|t| q0.value(1.0 - t) * kernel.q(t), &breaks, FULL_PANELS);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumericsError::NonFiniteIntegrand { at: f64::NAN }.into())
    }
}

/// Same integral evaluated on an explicit grid (in the rank `s` of `q0`).
pub fn minimal_budget_on(q0: &impl Quantile, kernel: &Kernel, grid: &Grid) -> Result<f64, QuantileError> {
    Ok(crate::numerics::integrate(|s| q0.value(s) * kernel.q(1.0 - s), grid)?)
}

fn integrate_split(f: impl Fn(f64) -> f64, breaks: &[f64], panels: usize) -> f64 {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&b| b > 0.0 && b < 1.0).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    if cuts.is_empty() {
        let mut total = 0.0;
        for_each_probit_node(0.0, 1.0, panels, |t, w| total += w * f(t));
        return total;
    }
    crate::numerics::quad(f, 0.0, 1.0, &cuts, panels)
}

/// How a solution quantile is produced on one rank interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum Segment {
    /// `I(lambda * (Q_rho(1-s) - level))`
    ClassicShifted {
        #[serde(rename = "y_level")]
        level: f64,
    },
    /// The benchmark quantile itself.
    Benchmark,
}

/// Quantile assembled from segments on `0 = s_0 < s_1 < ... < s_{K+1} = 1`.
/// Segment `k` covers `[s_k, s_{k+1})`.
#[derive(Debug, Clone)]
pub struct PiecewiseQuantile {
    utility: Arc<Utility>,
    kernel: Kernel,
    benchmark: Option<QuantileSpec>,
    lambda: f64,
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
}

impl PiecewiseQuantile {
    pub fn new(
        utility: Arc<Utility>,
        kernel: Kernel,
        benchmark: Option<QuantileSpec>,
        lambda: f64,
        breakpoints: Vec<f64>,
        segments: Vec<Segment>,
    ) -> Self {
        assert_eq!(breakpoints.len(), segments.len() + 1, "one segment per breakpoint gap");
        assert!(
            benchmark.is_some() || !segments.contains(&Segment::Benchmark),
            "benchmark segments need a benchmark quantile"
        );
        PiecewiseQuantile { utility, kernel, benchmark, lambda, breakpoints, segments }
    }

    pub fn classic(utility: Arc<Utility>, kernel: Kernel, lambda: f64) -> Self {
        Self::new(utility, kernel, None, lambda, vec![0.0, 1.0], vec![Segment::ClassicShifted { level: 0.0 }])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn utility(&self) -> &Arc<Utility> {
        &self.utility
    }

    pub fn segment_at(&self, s: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= s);
        k.clamp(1, self.segments.len()) - 1
    }

    /// Largest downward step between consecutive ranks of a verification grid.
    pub fn monotonicity_defect(&self, n: usize) -> f64 {
        let mut ranks: Vec<f64> = (1..n).map(|i| i as f64 / n as f64).collect();
        for &b in &self.breakpoints[1..self.breakpoints.len() - 1] {
            ranks.push(b);
            ranks.push((b - 1e-9).max(1e-12));
        }
        ranks.sort_by(f64::total_cmp);
        let vals: Vec<f64> = ranks.iter().map(|&s| self.value(s)).collect();
        vals.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

impl Quantile for PiecewiseQuantile {
    fn value(&self, s: f64) -> f64 {
        match self.segments[self.segment_at(s)] {
            Segment::ClassicShifted { level } => self.utility.conjugate(self.lambda * (self.kernel.q(1.0 - s) - level)),
            Segment::Benchmark => self.benchmark.as_ref().map_or(f64::NAN, |b| b.value(s)),
        }
    }

    fn breaks(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.breakpoints[1..self.breakpoints.len() - 1].to_vec();
        let slopes = self.utility.critical_slopes();
        for (k, seg) in self.segments.iter().enumerate() {
            let (lo, hi) = (self.breakpoints[k], self.breakpoints[k + 1]);
            match seg {
                Segment::ClassicShifted { level } => {
                    for &w in &slopes {
                        let s = 1.0 - self.kernel.cdf(level + w / self.lambda);
                        if s > lo && s < hi {
                            out.push(s);
                        }
                    }
                }
                Segment::Benchmark => {
                    if let Some(b) = &self.benchmark {
                        out.extend(b.breaks().into_iter().filter(|&r| r > lo && r < hi));
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_values() {
        let u = QuantileSpec::Affine { slope: 1.0, intercept: 0.0 };
        assert!((u.value(0.3) - 0.3).abs() < 1e-15);
        let ln = QuantileSpec::Lognormal { mu: 3.0, sigma: 1.0, shift: 0.0 };
        assert!((ln.value(0.5) - 3f64.exp()).abs() < 1e-12);
        let ex = QuantileSpec::Exponential { rate: 1.5, shift: 0.0 };
        assert!((ex.value(0.5) - 2f64.ln() / 1.5).abs() < 1e-15);
        let poly = QuantileSpec::Polynomial { coefficients: vec![-1.0, 0.0, 10.0] };
        assert!((poly.value(0.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain() {
        let u = QuantileSpec::Affine { slope: 1.0, intercept: 0.0 };
        assert!(matches!(u.eval(1.0), Err(QuantileError::OutOfDomain(_))));
        assert!(matches!(u.eval(0.0), Err(QuantileError::OutOfDomain(_))));
    }

    #[test]
    fn monotonicity_checked_at_construction() {
        let dec = QuantileSpec::Polynomial { coefficients: vec![0.0, 1.0, -2.0] };
        assert!(matches!(dec.validate(), Err(QuantileError::NotMonotone { .. })));
        let bad = QuantileSpec::Exponential { rate: 0.0, shift: 0.0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn interpolation_is_clamped() {
        let q = QuantileSpec::Piecewise { ranks: vec![0.25, 0.75], values: vec![1.0, 3.0] };
        assert_eq!(q.value(0.1), 1.0);
        assert_eq!(q.value(0.5), 2.0);
        assert_eq!(q.value(0.9), 3.0);
    }
}
