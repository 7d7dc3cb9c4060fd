//! Experiment files.

use std::path::{Path, PathBuf};

use sdopt::{MarketConfig, QuantileSpec, UtilitySpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Classic,
    Fsd,
    SsdPpra,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOptions {
    /// Rows in the quantile CSV and ranks used for verification.
    pub points: usize,
    /// Points per family in the region and switch scans.
    pub scan: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { points: 10_000, scan: 5000 }
    }
}

/// Published values a run is compared against; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub lambda: Option<f64>,
    pub lambda_cla: Option<f64>,
    pub minimal_budget: Option<f64>,
    pub region: Option<Vec<(f64, f64)>>,
    /// One partition point per reference interval, in the same order.
    pub partition: Option<Vec<f64>>,
    pub status: Option<sdopt::ppra::Status>,
    pub objective: Option<f64>,
    /// Whether a monotonicity repair must have been applied.
    pub repaired: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerance {
    pub lambda: f64,
    pub lambda_cla: f64,
    pub minimal_budget: f64,
    pub region: f64,
    pub partition: f64,
    pub objective: f64,
    /// Reference partition points equal to 0 or 1 must be reproduced exactly.
    pub exact_partition: bool,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            lambda: 5e-3,
            lambda_cla: 1e-3,
            minimal_budget: 1e-3,
            region: 5e-3,
            partition: 5e-3,
            objective: 2e-3,
            exact_partition: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: Option<Problem>,
    pub market: MarketConfig,
    pub utility: UtilitySpec,
    pub benchmark: Option<QuantileSpec>,
    /// Candidate quantile CSV for `validate`.
    pub candidate: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridOptions,
    pub out: Option<PathBuf>,
    pub reference: Option<Reference>,
    #[serde(default)]
    pub tolerance: Tolerance,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.market.validate().map_err(|e| CliError::Parse(e.to_string()))?;
        if let Some(b) = &cfg.benchmark {
            b.validate().map_err(|e| CliError::Parse(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn benchmark(&self) -> Result<&QuantileSpec, CliError> {
        self.benchmark.as_ref().ok_or_else(|| CliError::Parse(format!("{}: a benchmark is required", self.name)))
    }
}

macro_rules! bundle {
    ($($file:literal),* $(,)?) => {
        &[$(($file, include_str!(concat!("../configs/", $file, ".toml")))),*]
    };
}

/// Every shipped experiment file as `(name, contents)`.
pub const BUNDLED: &[(&str, &str)] = bundle!(
    "power-a", "power-b", "power-c", "power-d", "power-e", "power-f",
    "s-shaped-a", "s-shaped-b", "s-shaped-c", "s-shaped-d", "s-shaped-e", "s-shaped-f",
    "mixed-a", "mixed-b", "mixed-c", "mixed-d", "mixed-e", "mixed-f",
    "fsd-s-shaped", "classic-power",
);

/// Row groups reproduced by `reproduce-tables`, one CSV each.
pub const SUITES: &[&str] = &["power", "s-shaped", "mixed"];

pub fn bundled(name: &str) -> Result<ExperimentConfig, CliError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Parse(format!("no bundled experiment named {name}")))?;
    ExperimentConfig::parse(text)
}

/// Bundled rows of a suite in file order.
pub fn suite(name: &str) -> Result<Vec<ExperimentConfig>, CliError> {
    let prefix = format!("{name}-");
    BUNDLED
        .iter()
        .filter(|(n, _)| n.strip_prefix(&prefix).is_some_and(|rest| rest.len() == 1))
        .map(|(_, text)| ExperimentConfig::parse(text))
        .collect()
}
