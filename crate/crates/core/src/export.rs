//! Solution file consumed by the network trainer.

use serde::{Deserialize, Serialize};

use crate::market::MarketConfig;
use crate::ppra::PpraSolution;
use crate::quantile::{QuantileSpec, Segment};
use crate::utility::UtilitySpec;
use crate::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExportMarket {
    pub mu: f64,
    pub sigma: f64,
    pub x_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnExport {
    pub lambda: f64,
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Segment>,
    pub market: ExportMarket,
    pub utility: UtilitySpec,
    pub benchmark: QuantileSpec,
}

impl NnExport {
    pub fn from_solution(sol: &PpraSolution, market: &MarketConfig) -> Result<Self, SolveError> {
        let k = market.kernel()?;
        Ok(NnExport {
            lambda: sol.lambda,
            breakpoints: sol.quantile.breakpoints().to_vec(),
            segments: sol.quantile.segments().to_vec(),
            market: ExportMarket { mu: k.mu, sigma: k.sigma, x_bar: market.x_bar },
            utility: sol.quantile.utility().spec().clone(),
            benchmark: sol.benchmark().clone(),
        })
    }
}
