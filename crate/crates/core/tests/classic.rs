mod common;

use std::sync::Arc;

use proptest::prelude::*;
use sdopt::classic::{classic_budget, solve_classic, solve_classic_lambda};
use sdopt::{Kernel, MarketConfig, Quantile, Utility, UtilitySpec};

/// Power utility: `x_bar = lambda^{1/(p-1)} E[rho^{p/(p-1)}]`.
fn power_oracle(p: f64, k: &Kernel, x_bar: f64) -> f64 {
    let e = p / (p - 1.0);
    (x_bar / (e * k.mu + 0.5 * e * e * k.sigma * k.sigma).exp()).powf(p - 1.0)
}

#[test]
fn power_multiplier() {
    let u = Utility::new(UtilitySpec::Power { p: 0.6 }).unwrap();
    let m = common::market(10.0);
    let l = solve_classic_lambda(&u, &m).unwrap();
    assert!((l - 0.9003).abs() < 1e-3);
    assert!((l / power_oracle(0.6, &m.kernel().unwrap(), 10.0) - 1.0).abs() < 1e-6);
}

#[test]
fn budget_strictly_decreasing_around_the_multiplier() {
    let specs = [
        UtilitySpec::Power { p: 0.6 },
        UtilitySpec::Log,
        UtilitySpec::Exponential { p: 0.6, floor: None },
        UtilitySpec::SShaped { p: 0.6, q: 0.5, k: 2.0, gain: 1.0, liquidation: Some(-5.0) },
    ];
    let m = common::market(10.0);
    let k = m.kernel().unwrap();
    for spec in specs {
        let u = Utility::new(spec).unwrap();
        let l = solve_classic_lambda(&u, &m).unwrap();
        let b: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|f| classic_budget(&u, &k, f * l)).collect();
        assert!(b[0] > b[1] && b[1] > b[2], "{b:?}");
        assert!((b[1] - 10.0).abs() < 1e-8);
    }
}

#[test]
fn counter_comonotone_with_kernel() {
    let u = Arc::new(Utility::new(UtilitySpec::SShaped { p: 0.6, q: 0.5, k: 2.0, gain: 1.0, liquidation: Some(-5.0) }).unwrap());
    let sol = solve_classic(&u, &common::market(10.0)).unwrap();
    let v: Vec<f64> = (1..10_000).map(|i| sol.quantile.value(i as f64 / 10_000.0)).collect();
    assert!(v.windows(2).all(|w| w[0] <= w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]
    /// The market is drawn so that the tilt `|p/(p-1)| sigma` stays at most 2;
    /// beyond that the budget mass clipped off at rank 1 - 1e-12 exceeds 1e-6.
    /// The market price of risk is capped at 0.3.
    #[test]
    fn power_matches_closed_form(
        p in 0.05..0.95f64, tilt in 0.05..2.0f64, r in 0.0..0.08f64, sigma_s in 0.1..0.5f64, x_bar in 0.5..50.0f64,
    ) {
        let horizon: f64 = 20.0;
        let theta = (tilt * (1.0 - p) / p / horizon.sqrt()).min(0.3);
        let m = MarketConfig { r, mu_s: r + theta * sigma_s, sigma_s, horizon, x_bar };
        let u = Utility::new(UtilitySpec::Power { p }).unwrap();
        let l = solve_classic_lambda(&u, &m).unwrap();
        let oracle = power_oracle(p, &m.kernel().unwrap(), x_bar);
        prop_assert!((l / oracle - 1.0).abs() < 1e-6, "{} vs {}", l, oracle);
    }
}
