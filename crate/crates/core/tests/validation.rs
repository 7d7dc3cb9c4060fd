mod common;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use sdopt::numerics::norm_cdf;
use sdopt::validation::{budget_value, check_fsd, check_ssd, VERIFY_RANKS};
use sdopt::{Quantile, QuantileSpec};

const TOL: f64 = 1e-8;

fn candidate_pair() -> impl Strategy<Value = (QuantileSpec, QuantileSpec)> {
    let normal = (-2.0..2.0f64, 0.1..2.0f64, 0.0..1.0f64, 0.1..2.0f64).prop_map(|(m, s, d, s2)| {
        (QuantileSpec::Normal { mu: m + d, sigma: s2 }, QuantileSpec::Normal { mu: m, sigma: s })
    });
    let lognormal = (-1.0..2.0f64, 0.1..1.5f64, 0.0..0.5f64, 0.0..2.0f64).prop_map(|(m, s, d, k)| {
        (QuantileSpec::Lognormal { mu: m + d, sigma: s, shift: k }, QuantileSpec::Lognormal { mu: m, sigma: s, shift: 0.0 })
    });
    let exponential = (0.2..3.0f64, 0.0..1.0f64, -1.0..1.0f64).prop_map(|(rate, f, k)| {
        (QuantileSpec::Exponential { rate: rate * (1.0 - 0.5 * f), shift: k.max(0.0) }, QuantileSpec::Exponential { rate, shift: 0.0 })
    });
    prop_oneof![normal, lognormal, exponential]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn first_order_implies_second_order((q, q0) in candidate_pair()) {
        let fsd = check_fsd(&q, &q0, VERIFY_RANKS, TOL);
        if fsd.feasible {
            prop_assert!(check_ssd(&q, &q0, VERIFY_RANKS, TOL).feasible);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]
    #[test]
    fn second_order_is_transitive(m in -2.0..2.0f64, a in 0.1..3.0f64, f1 in 0.05..0.95f64, f2 in 0.05..0.95f64, normal in any::<bool>()) {
        let spread = |w: f64| if normal {
            QuantileSpec::Normal { mu: m, sigma: w }
        } else {
            QuantileSpec::Affine { slope: w, intercept: m - 0.5 * w }
        };
        let (q1, q2, q3) = (spread(a), spread(a * f1), spread(a * f1 * f2));
        prop_assert!(check_ssd(&q2, &q1, VERIFY_RANKS, TOL).feasible);
        prop_assert!(check_ssd(&q3, &q2, VERIFY_RANKS, TOL).feasible);
        prop_assert!(check_ssd(&q3, &q1, VERIFY_RANKS, TOL).feasible);
        prop_assert!(!check_ssd(&q1, &q3, VERIFY_RANKS, TOL).feasible);
    }
}

/// Antithetic estimate of `E[X(Phi(Z)) rho(-Z)]` with its standard error.
fn monte_carlo(x: &impl Quantile, mu: f64, sigma: f64, n: usize) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(2024);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n / 2 {
        let z: f64 = StandardNormal.sample(&mut rng);
        let v = 0.5 * (x.value(norm_cdf(z)) * (-sigma * z + mu).exp() + x.value(norm_cdf(-z)) * (sigma * z + mu).exp());
        sum += v;
        sq += v * v;
    }
    let m = n as f64 / 2.0;
    let mean = sum / m;
    (mean, ((sq / m - mean * mean).max(0.0) / m).sqrt())
}

#[test]
fn kernel_prices_agree_with_monte_carlo() {
    let k = common::market(10.0).kernel().unwrap();
    let n = 10_000_000;
    let own = budget_value(&k, &k).unwrap();
    let (mc, se) = monte_carlo(&k, k.mu, k.sigma, n);
    assert!((own - mc).abs() <= 3.0 * se + 1e-12 * mc, "{own} vs {mc} +- {se}");
    assert!((own / (2.0 * k.mu).exp() - 1.0).abs() < 1e-9);

    let q0 = common::lognormal(3.0, 1.0);
    let price = budget_value(&q0, &k).unwrap();
    let (mc, se) = monte_carlo(&q0, k.mu, k.sigma, n);
    assert!(se > 0.0);
    assert!((price - mc).abs() <= 3.0 * se, "{price} vs {mc} +- {se}");
}
