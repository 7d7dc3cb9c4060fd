//! Unconstrained optimum `Q(s) = I(lambda Q_rho(1-s))` with a binding budget.

use std::sync::Arc;

use serde::Serialize;

use crate::market::{Kernel, MarketConfig};
use crate::numerics::{find_root, quad_z, Bracket, FULL_PANELS};
use crate::quantile::PiecewiseQuantile;
use crate::utility::Utility;
use crate::validation::objective_value;
use crate::SolveError;

/// Initial multiplier search range, widened geometrically if needed.
pub const LAMBDA_RANGE: (f64, f64) = (1e-8, 1e8);

/// Kernel ranks where `t -> I(lambda (Q_rho(t) - level))` jumps or kinks.
pub fn shifted_breaks(u: &Utility, kernel: &Kernel, lambda: f64, level: f64) -> Vec<f64> {
    u.critical_slopes().into_iter().map(|w| kernel.cdf(level + w / lambda)).filter(|&t| t > 0.0 && t < 1.0).collect()
}

/// `int_lo^hi g(Q_rho(t), I(lambda (Q_rho(t) - level)), t, z) dt` over kernel ranks,
/// split at the jumps of `I`.
pub fn shifted_integral(
    u: &Utility,
    kernel: &Kernel,
    lambda: f64,
    level: f64,
    (lo, hi): (f64, f64),
    panels: usize,
    g: impl Fn(f64, f64, f64, f64) -> f64,
) -> f64 {
    let breaks = shifted_breaks(u, kernel, lambda, level);
    quad_z(
        |t, z| {
            let r = (kernel.sigma * z + kernel.mu).exp();
            g(r, u.conjugate(lambda * (r - level)), t, z)
        },
        lo,
        hi,
        &breaks,
        panels,
    )
}

/// `int_0^1 Q_rho(t) I(lambda Q_rho(t)) dt`, strictly decreasing in `lambda`.
pub fn classic_budget(u: &Utility, kernel: &Kernel, lambda: f64) -> f64 {
    shifted_integral(u, kernel, lambda, 0.0, (0.0, 1.0), FULL_PANELS, |r, x, _, _| r * x)
}

/// Root of a decreasing `f(lambda)` by bisection in `ln lambda`.
pub(crate) fn solve_decreasing(f: impl Fn(f64) -> f64, x_bar: f64, tol: f64) -> Result<f64, SolveError> {
    let (mut lo, mut hi) = (LAMBDA_RANGE.0.ln(), LAMBDA_RANGE.1.ln());
    let g = |l: f64| f(l.exp());
    for _ in 0..8 {
        if g(lo) > 0.0 {
            break;
        }
        lo -= 10.0;
    }
    for _ in 0..8 {
        if g(hi) < 0.0 {
            break;
        }
        hi += 10.0;
    }
    let bracket = Bracket::new(g, lo, hi).map_err(|_| SolveError::BudgetUnattainable { x_bar, lo: lo.exp(), hi: hi.exp() })?;
    Ok(find_root(g, bracket, tol)?.exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassicSolution {
    pub lambda: f64,
    #[serde(skip)]
    pub quantile: PiecewiseQuantile,
    pub objective: f64,
    pub budget: f64,
}

/// Multiplier `lambda_cla` with `int Q_rho I(lambda_cla Q_rho) = x_bar`.
pub fn solve_classic_lambda(u: &Utility, market: &MarketConfig) -> Result<f64, SolveError> {
    u.require_envelope()?;
    let kernel = market.kernel()?;
    let x_bar = market.x_bar;
    solve_decreasing(|l| classic_budget(u, &kernel, l) - x_bar, x_bar, 1e-14)
}

pub fn solve_classic(u: &Arc<Utility>, market: &MarketConfig) -> Result<ClassicSolution, SolveError> {
    let kernel = market.kernel()?;
    let lambda = solve_classic_lambda(u, market)?;
    let quantile = PiecewiseQuantile::classic(u.clone(), kernel, lambda);
    let budget = classic_budget(u, &kernel, lambda);
    let objective = objective_value(&quantile, u).unwrap_or(f64::NAN);
    Ok(ClassicSolution { lambda, quantile, objective, budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::UtilitySpec;

    fn market(x_bar: f64) -> MarketConfig {
        MarketConfig { r: 0.05, mu_s: 0.086, sigma_s: 0.3, horizon: 20.0, x_bar }
    }

    /// Power utility: `x_bar = lambda^{1/(p-1)} E[rho^{p/(p-1)}]`.
    fn power_oracle(p: f64, k: &Kernel, x_bar: f64) -> f64 {
        let e = p / (p - 1.0);
        (x_bar / (e * k.mu + 0.5 * e * e * k.sigma * k.sigma).exp()).powf(p - 1.0)
    }

    #[test]
    fn power_matches_oracle() {
        let u = Arc::new(Utility::new(UtilitySpec::Power { p: 0.6 }).unwrap());
        let m = market(10.0);
        let sol = solve_classic(&u, &m).unwrap();
        let oracle = power_oracle(0.6, &m.kernel().unwrap(), 10.0);
        assert!((sol.lambda / oracle - 1.0).abs() < 1e-9, "{} vs {}", sol.lambda, oracle);
        assert!((sol.budget - 10.0).abs() < 1e-9);
    }

    #[test]
    fn budget_decreasing() {
        let u = Utility::new(UtilitySpec::SShaped { p: 0.6, q: 0.5, k: 2.0, gain: 1.0, liquidation: Some(-5.0) }).unwrap();
        let k = market(10.0).kernel().unwrap();
        let b: Vec<f64> = [0.45, 0.9, 1.8].iter().map(|&l| classic_budget(&u, &k, l)).collect();
        assert!(b[0] > b[1] && b[1] > b[2]);
    }

    #[test]
    fn no_envelope_is_rejected() {
        let u = Arc::new(Utility::new(UtilitySpec::SShaped { p: 0.6, q: 0.5, k: 2.0, gain: 1.0, liquidation: None }).unwrap());
        assert!(solve_classic(&u, &market(10.0)).is_err());
    }
}
