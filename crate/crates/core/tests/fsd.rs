mod common;

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use sdopt::fsd::{pointwise_optimum, solve_fsd, FsdSolution};
use sdopt::quantile::minimal_budget;
use sdopt::validation::{budget_value, check_fsd, VERIFY_RANKS};
use sdopt::{Quantile, QuantileSpec, Utility, UtilitySpec};

fn s_shaped() -> Arc<Utility> {
    Arc::new(Utility::new(UtilitySpec::SShaped { p: 0.6, q: 0.5, k: 2.0, gain: 1.0, liquidation: None }).unwrap())
}

fn quadratic() -> QuantileSpec {
    QuantileSpec::Polynomial { coefficients: vec![-1.0, 0.0, 10.0] }
}

fn cases() -> Vec<(Arc<Utility>, QuantileSpec, f64)> {
    vec![
        (s_shaped(), quadratic(), 5.0),
        (s_shaped(), common::lognormal(1.0, 0.5), 5.0),
        (Arc::new(Utility::new(UtilitySpec::Power { p: 0.6 }).unwrap()), common::lognormal(3.0, 1.0), 10.0),
        (Arc::new(Utility::new(UtilitySpec::Log).unwrap()), QuantileSpec::Affine { slope: 10.0, intercept: 0.0 }, 1.4),
    ]
}

fn solve(u: &Arc<Utility>, q0: &QuantileSpec, x_bar: f64) -> FsdSolution {
    solve_fsd(u, q0, &common::market(x_bar), 5000).unwrap()
}

#[test]
fn feasible_and_budget_binds() {
    for (u, q0, x_bar) in cases() {
        let sol = solve(&u, &q0, x_bar);
        assert!(check_fsd(&sol.quantile, &q0, VERIFY_RANKS, 1e-8).feasible, "{q0:?}");
        let k = common::market(x_bar).kernel().unwrap();
        let b = budget_value(&sol.quantile, &k).unwrap();
        assert!((b - x_bar).abs() <= 1e-4 * x_bar, "{b} vs {x_bar}");
    }
}

#[test]
fn pointwise_optimal_against_brute_force() {
    let mut rng = StdRng::seed_from_u64(3);
    for (u, q0, x_bar) in cases() {
        let sol = solve(&u, &q0, x_bar);
        let lambda = sol.lambda.unwrap();
        let k = common::market(x_bar).kernel().unwrap();
        for _ in 0..500 {
            let t: f64 = rng.random_range(1e-4..1.0 - 1e-4);
            let y = lambda * k.q(t);
            let floor = q0.value(1.0 - t);
            let (x, _) = pointwise_optimum(&u, floor, y).unwrap();
            assert!((x - sol.quantile.value(1.0 - t)).abs() <= 1e-9 * x.abs().max(1.0));
            let f = |x: f64| u.value(x) - y * x;
            let hi = floor.max(0.0) + 4.0 * x.abs().max(10.0);
            let n = 100_000;
            let grid = (0..=n).map(|j| floor + (hi - floor) * j as f64 / n as f64);
            let best = grid.map(f).fold(f64::NEG_INFINITY, f64::max);
            assert!(f(x) >= best - 1e-6, "t={t}: f({x})={} below grid {best}", f(x));
        }
    }
}

#[test]
fn more_capital_dominates_pointwise() {
    let u = s_shaped();
    let q0 = quadratic();
    let sols: Vec<FsdSolution> = [5.0, 6.0, 8.0].iter().map(|&x| solve(&u, &q0, x)).collect();
    for w in sols.windows(2) {
        for i in 0..VERIFY_RANKS {
            let s = (i as f64 + 0.5) / VERIFY_RANKS as f64;
            assert!(w[1].quantile.value(s) >= w[0].quantile.value(s) - 1e-12);
        }
    }
}

#[test]
fn benchmark_price_returns_benchmark() {
    let u = s_shaped();
    let q0 = quadratic();
    let k = common::market(1.0).kernel().unwrap();
    let x_bar = minimal_budget(&q0, &k).unwrap();
    let sol = solve(&u, &q0, x_bar);
    assert!(sol.lambda.is_none());
    assert!(sol.classic_intervals.is_empty());
    for i in 0..1000 {
        let s = (i as f64 + 0.5) / 1000.0;
        assert_eq!(sol.quantile.value(s), q0.value(s));
    }
}

#[test]
fn below_benchmark_price_is_infeasible() {
    let q0 = quadratic();
    let k = common::market(1.0).kernel().unwrap();
    let x_bar = 0.9 * minimal_budget(&q0, &k).unwrap();
    assert!(matches!(
        solve_fsd(&s_shaped(), &q0, &common::market(x_bar), 5000),
        Err(sdopt::SolveError::Infeasible { .. })
    ));
}
