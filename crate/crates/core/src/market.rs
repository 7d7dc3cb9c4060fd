//! Black-Scholes market and its lognormal pricing-kernel quantile.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{norm_cdf, norm_quantile};
use crate::quantile::{Quantile, QuantileSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("stock volatility must be positive, got {0}")]
    Volatility(f64),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("kernel dispersion must be positive (market price of risk {0})")]
    DegenerateKernel(f64),
    #[error("initial capital must be finite, got {0}")]
    Capital(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub r: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
    #[serde(alias = "T")]
    pub horizon: f64,
    pub x_bar: f64,
}

impl MarketConfig {
    pub fn theta(&self) -> f64 {
        (self.mu_s - self.r) / self.sigma_s
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.sigma_s > 0.0) {
            return Err(MarketError::Volatility(self.sigma_s));
        }
        if !(self.horizon > 0.0) {
            return Err(MarketError::Horizon(self.horizon));
        }
        if !self.x_bar.is_finite() {
            return Err(MarketError::Capital(self.x_bar));
        }
        if !(self.theta() * self.horizon.sqrt() > 0.0) {
            return Err(MarketError::DegenerateKernel(self.theta()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel, MarketError> {
        self.validate()?;
        let th = self.theta();
        Ok(Kernel {
            mu: -(self.r + 0.5 * th * th) * self.horizon,
            sigma: th * self.horizon.sqrt(),
        })
    }

    pub fn kernel_quantile(&self) -> Result<QuantileSpec, MarketError> {
        Ok(self.kernel()?.spec())
    }
}

/// Quantile of the pricing kernel, `exp(sigma * Phi^-1(t) + mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub mu: f64,
    pub sigma: f64,
}

impl Kernel {
    pub fn q(&self, t: f64) -> f64 {
        (self.sigma * norm_quantile(t) + self.mu).exp()
    }

    /// Distribution function: the rank `t` with `q(t) = y`.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y.is_infinite() {
            return 1.0;
        }
        norm_cdf((y.ln() - self.mu) / self.sigma)
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    pub fn spec(&self) -> QuantileSpec {
        QuantileSpec::Lognormal { mu: self.mu, sigma: self.sigma, shift: 0.0 }
    }
}

impl Quantile for Kernel {
    fn value(&self, s: f64) -> f64 {
        self.q(s)
    }
}
