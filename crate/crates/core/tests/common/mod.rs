#![allow(dead_code)]

use sdopt::{MarketConfig, QuantileSpec};

pub fn market(x_bar: f64) -> MarketConfig {
    MarketConfig { r: 0.05, mu_s: 0.086, sigma_s: 0.3, horizon: 20.0, x_bar }
}

pub fn lognormal(mu: f64, sigma: f64) -> QuantileSpec {
    QuantileSpec::Lognormal { mu, sigma, shift: 0.0 }
}

/// `int_0^1 Q0(s) Q_rho(1-s) ds` for a lognormal benchmark.
pub fn lognormal_price(mu0: f64, sigma0: f64, mu: f64, sigma: f64) -> f64 {
    (mu0 + mu + 0.5 * (sigma0 - sigma).powi(2)).exp()
}
