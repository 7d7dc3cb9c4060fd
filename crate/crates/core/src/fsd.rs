//! Optimum under a first-order dominance constraint `Q >= Q0`.
//!
//! State by state the problem is `max {U(x) - y x : x >= floor}` with
//! `y = lambda Q_rho(t)` and `floor = Q0(1-t)`. The solution is either the
//! floor or the unconstrained maximizer on the concave part, switching at a
//! marginal threshold that depends only on the floor.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::classic::solve_decreasing;
use crate::market::{Kernel, MarketConfig};
use crate::numerics::{find_sign_regions, quad_z, scan_points, SUB_PANELS};
use crate::quantile::{minimal_budget, Quantile, QuantileSpec};
use crate::utility::{Utility, UtilityError};
use crate::validation::{budget_value, objective_value};
use crate::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Classic,
    Floor,
}

/// Largest marginal level `y` at which the unconstrained choice still beats the floor.
/// Ties go to the floor.
pub fn switch_threshold(u: &Utility, floor: f64) -> Result<f64, UtilityError> {
    if u.is_s_shaped() {
        let (p, gain) = u.gain_branch()?;
        if floor < 0.0 {
            let c = u.fsd_tangent(floor)?;
            Ok(gain * c.powf(p - 1.0))
        } else if floor == 0.0 {
            Ok(f64::INFINITY)
        } else {
            Ok(gain * floor.powf(p - 1.0))
        }
    } else if u.is_concave() {
        u.require_envelope()?;
        Ok(u.threshold(floor))
    } else {
        Err(UtilityError::NotSShaped)
    }
}

/// Maximizer of `U(x) - y x` over the concave part (the gain branch for S-shaped utilities).
pub fn unconstrained_choice(u: &Utility, y: f64) -> Result<f64, UtilityError> {
    if u.is_s_shaped() {
        let (p, gain) = u.gain_branch()?;
        Ok((y / gain).powf(1.0 / (p - 1.0)))
    } else {
        u.try_conjugate(y)
    }
}

pub fn pointwise_optimum(u: &Utility, floor: f64, y: f64) -> Result<(f64, Regime), UtilityError> {
    if !(y > 0.0) {
        return Err(UtilityError::Parameters(format!("marginal level {y} must be positive")));
    }
    if y < switch_threshold(u, floor)? {
        Ok((unconstrained_choice(u, y)?.max(floor), Regime::Classic))
    } else {
        Ok((floor, Regime::Floor))
    }
}

/// Solution quantile: classic on `classic` rank intervals of `s`, the benchmark elsewhere.
#[derive(Debug, Clone)]
pub struct FsdQuantile {
    utility: Arc<Utility>,
    kernel: Kernel,
    benchmark: QuantileSpec,
    lambda: f64,
    classic: Vec<(f64, f64)>,
}

impl FsdQuantile {
    pub fn regime(&self, s: f64) -> Regime {
        if self.classic.iter().any(|&(a, b)| s > a && s < b) {
            Regime::Classic
        } else {
            Regime::Floor
        }
    }

    /// Rank intervals of `s` on which the unconstrained choice is taken.
    pub fn classic_intervals(&self) -> &[(f64, f64)] {
        &self.classic
    }
}

impl Quantile for FsdQuantile {
    fn value(&self, s: f64) -> f64 {
        match self.regime(s) {
            Regime::Classic => unconstrained_choice(&self.utility, self.lambda * self.kernel.q(1.0 - s))
                .map_or(f64::NAN, |x| x.max(self.benchmark.value(s))),
            Regime::Floor => self.benchmark.value(s),
        }
    }

    fn breaks(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.classic.iter().flat_map(|&(a, b)| [a, b]).filter(|&r| r > 0.0 && r < 1.0).collect();
        out.extend(self.benchmark.breaks());
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FsdSolution {
    /// `None` when the budget equals the benchmark price and no multiplier is defined.
    pub lambda: Option<f64>,
    #[serde(skip)]
    pub quantile: FsdQuantile,
    pub objective: f64,
    pub budget: f64,
    pub classic_intervals: Vec<(f64, f64)>,
}

struct FsdProblem<'a> {
    u: &'a Utility,
    q0: &'a QuantileSpec,
    kernel: Kernel,
    points: Vec<f64>,
    cache: HashMap<u64, f64>,
}

impl FsdProblem<'_> {
    fn threshold(&self, t: f64) -> f64 {
        match self.cache.get(&t.to_bits()) {
            Some(&v) => v,
            None => switch_threshold(self.u, self.q0.value(1.0 - t)).unwrap_or(f64::NAN),
        }
    }

    /// Kernel-rank intervals where the unconstrained choice is taken.
    fn classic_regions(&self, lambda: f64) -> Vec<(f64, f64)> {
        find_sign_regions(|t| lambda * self.kernel.q(t) - self.threshold(t), &self.points, 1e-12)
    }

    fn budget(&self, lambda: f64) -> f64 {
        let regions = self.classic_regions(lambda);
        let k = self.kernel;
        let mut total = 0.0;
        let mut prev = 0.0;
        let floor = |lo: f64, hi: f64| {
            quad_z(|t, z| (k.sigma * z + k.mu).exp() * self.q0.value_z(1.0 - t, -z), lo, hi, &[], SUB_PANELS)
        };
        for &(a, b) in &regions {
            total += floor(prev, a);
            total += quad_z(
                |t, z| {
                    let r = (k.sigma * z + k.mu).exp();
                    let x = unconstrained_choice(self.u, lambda * r).unwrap_or(f64::NAN);
                    r * x.max(self.q0.value_z(1.0 - t, -z))
                },
                a,
                b,
                &[],
                SUB_PANELS,
            );
            prev = b;
        }
        total + floor(prev, 1.0)
    }
}

pub fn solve_fsd(u: &Arc<Utility>, q0: &QuantileSpec, market: &MarketConfig, scan: usize) -> Result<FsdSolution, SolveError> {
    q0.validate()?;
    switch_threshold(u, q0.value(0.5))?;
    let kernel = market.kernel()?;
    let x_bar = market.x_bar;
    let minimal = minimal_budget(q0, &kernel)?;
    let slack = 1e-12 * x_bar.abs().max(1.0);
    if x_bar < minimal - slack {
        return Err(SolveError::Infeasible { x_bar, minimal });
    }
    let build = |lambda: Option<f64>, classic: Vec<(f64, f64)>| {
        let quantile =
            FsdQuantile { utility: u.clone(), kernel, benchmark: q0.clone(), lambda: lambda.unwrap_or(f64::NAN), classic };
        let objective = objective_value(&quantile, u).unwrap_or(f64::NAN);
        let budget = budget_value(&quantile, &kernel).unwrap_or(f64::NAN);
        FsdSolution { lambda, classic_intervals: quantile.classic.clone(), quantile, objective, budget }
    };
    if x_bar <= minimal + slack {
        return Ok(build(None, Vec::new()));
    }

    let points = scan_points(scan);
    let mut cache = HashMap::with_capacity(points.len());
    for &t in &points {
        cache.insert(t.to_bits(), switch_threshold(u, q0.value(1.0 - t))?);
    }
    let prob = FsdProblem { u, q0, kernel, points, cache };
    let lambda = solve_decreasing(|l| prob.budget(l) - x_bar, x_bar, 1e-13)?;
    let classic = prob.classic_regions(lambda).into_iter().rev().map(|(a, b)| (1.0 - b, 1.0 - a)).collect();
    Ok(build(Some(lambda), classic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::UtilitySpec;

    fn sqrt_u() -> Utility {
        Utility::new(UtilitySpec::SShaped { p: 0.5, q: 0.5, k: 0.0, gain: 0.5, liquidation: None }).unwrap()
    }

    #[test]
    fn floor_at_reference_point() {
        let u = Utility::new(UtilitySpec::SShaped { p: 0.6, q: 0.5, k: 2.0, gain: 1.0, liquidation: None }).unwrap();
        let (x, r) = pointwise_optimum(&u, 0.0, 1.0).unwrap();
        assert_eq!(r, Regime::Classic);
        assert!((x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_switch() {
        let u = sqrt_u();
        assert_eq!(pointwise_optimum(&u, -1.0, 0.6).unwrap(), (-1.0, Regime::Floor));
        let (x, r) = pointwise_optimum(&u, -1.0, 0.4).unwrap();
        assert_eq!(r, Regime::Classic);
        assert!((x - 1.5625).abs() < 1e-12);
        // tie goes to the floor
        assert_eq!(pointwise_optimum(&u, -1.0, 0.5).unwrap().1, Regime::Floor);
    }

    #[test]
    fn concave_path() {
        let u = Utility::new(UtilitySpec::Power { p: 0.5 }).unwrap();
        // U'(x) = x^{-1/2}; at floor 4 the threshold is 1/2
        assert!((switch_threshold(&u, 4.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(pointwise_optimum(&u, 4.0, 0.6).unwrap(), (4.0, Regime::Floor));
    }
}
