//! Portfolio selection under stochastic-dominance constraints in a complete
//! Black-Scholes market, solved in quantile form.
//!
//! * [`classic`]: unconstrained expected-utility optimum.
//! * [`fsd`]: closed-form optimum under a first-order dominance constraint.
//! * [`ppra`]: feasible solutions under a second-order dominance constraint,
//!   built by correcting the classic solution on its poor-performance region.
//! * [`validation`]: independent dominance, budget and objective checks.

pub mod classic;
pub mod export;
pub mod fsd;
pub mod market;
pub mod numerics;
pub mod ppra;
pub mod quantile;
pub mod utility;
pub mod validation;

use thiserror::Error;

pub use market::{Kernel, MarketConfig};
pub use quantile::{PiecewiseQuantile, Quantile, QuantileSpec, Segment};
pub use utility::{Utility, UtilitySpec};

/// Errors raised by the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no multiplier in [{lo:e}, {hi:e}] makes the budget equal {x_bar}")]
    BudgetUnattainable { x_bar: f64, lo: f64, hi: f64 },
    #[error("initial capital {x_bar} is below the cheapest benchmark-dominating budget {minimal}")]
    Infeasible { x_bar: f64, minimal: f64 },
    #[error(transparent)]
    Market(#[from] market::MarketError),
    #[error(transparent)]
    Utility(#[from] utility::UtilityError),
    #[error(transparent)]
    Quantile(#[from] quantile::QuantileError),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}
