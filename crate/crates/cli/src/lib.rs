//! Experiment runner for the `sdopt` solvers: loads experiment files, solves,
//! verifies and writes summary JSON, quantile CSV, an SVG plot and the
//! trainer export.

pub mod compare;
pub mod config;
pub mod plot;

use std::path::Path;
use std::sync::Arc;

use sdopt::classic::{solve_classic, ClassicSolution};
use sdopt::export::NnExport;
use sdopt::fsd::{solve_fsd, FsdSolution, Regime};
use sdopt::ppra::{solve_ppra, PpraOptions, PpraSolution, Repair};
use sdopt::quantile::minimal_budget;
use sdopt::validation::{check_fsd, check_ssd, DominanceReport, Order, DEFAULT_TOL};
use sdopt::{PiecewiseQuantile, Quantile, QuantileSpec, SolveError, Utility};
use serde::Serialize;
use thiserror::Error;

use crate::compare::{compare_ppra, status_name, Check};
use crate::config::{ExperimentConfig, Problem};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            SolveError::Utility(_) | SolveError::Quantile(_) | SolveError::Market(_) => CliError::Parse(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

/// Command-line overrides of the experiment file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub grid_points: Option<usize>,
    pub tol_budget: f64,
    /// Accepted for interface stability; no primary solver draws random numbers.
    pub seed: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { grid_points: None, tol_budget: 1e-4, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub problem: Problem,
    pub x_bar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimal_budget: Option<f64>,
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_cla: Option<f64>,
    /// Poor-performance region in kernel ranks (PPRA only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repairs: Option<Vec<Repair>>,
    /// Solution ranks on which the unconstrained choice is taken (FSD only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classic_intervals: Option<Vec<(f64, f64)>>,
    pub objective: f64,
    pub budget: f64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<DominanceReport>,
}

/// Everything one run writes to disk.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub summary: Summary,
    pub csv: String,
    pub svg: String,
    pub nn_export: Option<String>,
}

pub enum Solution {
    Classic(ClassicSolution),
    Fsd(FsdSolution),
    Ppra(PpraSolution),
}

pub struct Outcome {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub minimal_budget: Option<f64>,
    pub solution: Solution,
    /// Set when the solution failed verification; the artifacts are then withheld.
    pub failure: Option<String>,
    classic: Option<PiecewiseQuantile>,
    utility: Arc<Utility>,
}

fn grid_points(cfg: &ExperimentConfig, opts: &RunOptions) -> usize {
    opts.grid_points.unwrap_or(cfg.grid.points).max(1)
}

pub fn ppra_options(cfg: &ExperimentConfig, opts: &RunOptions) -> PpraOptions {
    PpraOptions {
        scan: cfg.grid.scan,
        tol_budget: opts.tol_budget,
        verify_ranks: grid_points(cfg, opts),
        ..PpraOptions::default()
    }
}

fn binds(budget: f64, x_bar: f64, tol: f64) -> bool {
    (budget - x_bar).abs() <= tol * x_bar.abs().max(1e-12)
}

/// Solves `cfg` as `problem` and verifies the result.
pub fn solve(cfg: &ExperimentConfig, problem: Problem, opts: &RunOptions) -> Result<Outcome, CliError> {
    let utility = Arc::new(Utility::new(cfg.utility.clone()).map_err(|e| CliError::Parse(e.to_string()))?);
    let kernel = cfg.market.kernel().map_err(|e| CliError::Parse(e.to_string()))?;
    let x_bar = cfg.market.x_bar;
    let n = grid_points(cfg, opts);
    let minimal = match problem {
        Problem::Fsd | Problem::SsdPpra => {
            let m = minimal_budget(cfg.benchmark()?, &kernel).map_err(|e| CliError::Parse(e.to_string()))?;
            if x_bar < m - 1e-12 * x_bar.abs().max(1.0) {
                return Err(SolveError::Infeasible { x_bar, minimal: m }.into());
            }
            Some(m)
        }
        _ => None,
    };
    let classic_of = |u: &Arc<Utility>| {
        u.require_envelope().ok().and_then(|_| solve_classic(u, &cfg.market).ok()).map(|c| c.quantile)
    };
    let (solution, failure, classic) = match problem {
        Problem::Classic => {
            let sol = solve_classic(&utility, &cfg.market)?;
            let failure = (!binds(sol.budget, x_bar, opts.tol_budget))
                .then(|| format!("budget {} does not bind to {x_bar}", sol.budget));
            let classic = Some(sol.quantile.clone());
            (Solution::Classic(sol), failure, classic)
        }
        Problem::Fsd => {
            let q0 = cfg.benchmark()?;
            let sol = solve_fsd(&utility, q0, &cfg.market, cfg.grid.scan)?;
            let report = check_fsd(&sol.quantile, q0, n, DEFAULT_TOL);
            let failure = if !report.feasible {
                Some(format!("shortfall {:.3e} at rank {:.6}", report.worst_violation, report.worst_location))
            } else if sol.lambda.is_some() && !binds(sol.budget, x_bar, opts.tol_budget) {
                Some(format!("budget {} does not bind to {x_bar}", sol.budget))
            } else {
                None
            };
            (Solution::Fsd(sol), failure, classic_of(&utility))
        }
        Problem::SsdPpra => {
            let q0 = cfg.benchmark()?;
            let sol = solve_ppra(&utility, q0, &cfg.market, &ppra_options(cfg, opts))?;
            let failure = sol
                .status
                .is_failed()
                .then(|| format!("{}: {}", status_name(sol.status), sol.diagnostic.clone().unwrap_or_default()));
            let classic = Some(PiecewiseQuantile::classic(utility.clone(), kernel, sol.lambda_cla));
            (Solution::Ppra(sol), failure, classic)
        }
        Problem::Validate => return Err(CliError::Parse("validate runs on quantile files, not a solver".into())),
    };
    Ok(Outcome { config: cfg.clone(), problem, minimal_budget: minimal, solution, failure, classic, utility })
}

impl Outcome {
    pub fn summary(&self) -> Summary {
        let cfg = &self.config;
        let mut s = Summary {
            name: cfg.name.clone(),
            problem: self.problem,
            x_bar: cfg.market.x_bar,
            minimal_budget: self.minimal_budget,
            lambda: None,
            lambda_cla: None,
            region: None,
            partition: None,
            repairs: None,
            classic_intervals: None,
            objective: f64::NAN,
            budget: f64::NAN,
            status: String::new(),
            diagnostic: self.failure.clone(),
            verification: None,
        };
        match &self.solution {
            Solution::Classic(c) => {
                s.lambda = Some(c.lambda);
                s.lambda_cla = Some(c.lambda);
                s.objective = c.objective;
                s.budget = c.budget;
                s.status = if self.failure.is_some() { "failed-verification" } else { "classic" }.into();
            }
            Solution::Fsd(f) => {
                s.lambda = f.lambda;
                s.classic_intervals = Some(f.classic_intervals.clone());
                s.objective = f.objective;
                s.budget = f.budget;
                s.status = if self.failure.is_some() { "failed-verification" } else { "fsd-optimal" }.into();
                if let Some(q0) = &cfg.benchmark {
                    s.verification = Some(check_fsd(&f.quantile, q0, VERIFY_SUMMARY, DEFAULT_TOL));
                }
            }
            Solution::Ppra(p) => {
                s.lambda = Some(p.lambda);
                s.lambda_cla = Some(p.lambda_cla);
                s.region = Some(p.region.intervals.clone());
                s.partition = Some(p.partition.clone());
                s.repairs = Some(p.correction.repairs.clone());
                s.objective = p.objective;
                s.budget = p.budget;
                s.status = status_name(p.status);
                s.diagnostic = p.diagnostic.clone();
                s.verification = Some(p.ssd);
            }
        }
        s
    }

    /// The solution quantile as a trait object.
    fn quantile(&self) -> &dyn Quantile {
        match &self.solution {
            Solution::Classic(c) => &c.quantile,
            Solution::Fsd(f) => &f.quantile,
            Solution::Ppra(p) => &p.quantile,
        }
    }

    /// `n` midpoint ranks with solution, classic and benchmark values; FSD
    /// runs add the regime tag.
    pub fn csv(&self, n: usize) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fsd = match &self.solution {
            Solution::Fsd(f) => Some(&f.quantile),
            _ => None,
        };
        let csv_err = |e: csv::Error| CliError::Solver(e.to_string());
        if fsd.is_some() {
            w.write_record(["rank", "solution", "classic", "benchmark", "regime"]).map_err(csv_err)?;
        } else {
            w.write_record(["rank", "solution", "classic", "benchmark"]).map_err(csv_err)?;
        }
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            let mut rec = vec![
                s.to_string(),
                self.quantile().value(s).to_string(),
                cell(self.classic.as_ref().map(|c| c.value(s))),
                cell(self.config.benchmark.as_ref().map(|b| b.value(s))),
            ];
            if let Some(q) = fsd {
                rec.push(match q.regime(s) {
                    Regime::Classic => "classic".into(),
                    Regime::Floor => "floor".into(),
                });
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Solver(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Solver(e.to_string()))
    }

    pub fn svg(&self, n: usize) -> String {
        let ranks: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let curve = |q: &dyn Quantile| ranks.iter().map(|&s| (s, q.value(s))).collect();
        let label = match self.problem {
            Problem::Fsd => "FSD",
            Problem::SsdPpra => "PPRA",
            _ => "solution",
        };
        let mut series = vec![plot::Series { label, color: "#d62728", points: curve(self.quantile()) }];
        if let (Some(c), false) = (&self.classic, self.problem == Problem::Classic) {
            series.push(plot::Series { label: "classic", color: "#1f77b4", points: curve(c) });
        }
        if let Some(b) = &self.config.benchmark {
            series.push(plot::Series { label: "benchmark", color: "#2ca02c", points: curve(b) });
        }
        plot::render(&series, (0.0, 0.99))
    }

    pub fn nn_export(&self) -> Result<Option<String>, CliError> {
        match &self.solution {
            Solution::Ppra(p) => {
                let e = NnExport::from_solution(p, &self.config.market)?;
                Ok(Some(to_json(&e)?))
            }
            _ => Ok(None),
        }
    }

    pub fn artifacts(&self, opts: &RunOptions) -> Result<Artifacts, CliError> {
        let n = grid_points(&self.config, opts);
        Ok(Artifacts { summary: self.summary(), csv: self.csv(n)?, svg: self.svg(n.min(2000)), nn_export: self.nn_export()? })
    }

    pub fn utility(&self) -> &Arc<Utility> {
        &self.utility
    }
}

/// Ranks used for the verification report echoed in FSD summaries.
const VERIFY_SUMMARY: usize = sdopt::validation::VERIFY_RANKS;

pub fn to_json(v: &impl Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Solver(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

/// Solves, writes the artifacts under `dir` and reports failures as errors.
/// A failed solution still gets its summary written, and nothing else.
pub fn run(cfg: &ExperimentConfig, problem: Problem, dir: &Path, opts: &RunOptions) -> Result<Summary, CliError> {
    let outcome = solve(cfg, problem, opts)?;
    let summary = outcome.summary();
    write_atomic(dir, "summary.json", &to_json(&summary)?)?;
    if let Some(msg) = &outcome.failure {
        return Err(CliError::Solver(msg.clone()));
    }
    let a = outcome.artifacts(opts)?;
    write_atomic(dir, "quantile.csv", &a.csv)?;
    write_atomic(dir, "plot.svg", &a.svg)?;
    if let Some(e) = &a.nn_export {
        write_atomic(dir, "nn_export.json", e)?;
    }
    Ok(summary)
}

/// Solves a PPRA problem and writes only the trainer export.
pub fn export_nn(cfg: &ExperimentConfig, dir: &Path, opts: &RunOptions) -> Result<(), CliError> {
    let outcome = solve(cfg, Problem::SsdPpra, opts)?;
    if let Some(msg) = &outcome.failure {
        return Err(CliError::Solver(msg.clone()));
    }
    let e = outcome.nn_export()?.expect("PPRA outcomes always export");
    write_atomic(dir, "nn_export.json", &e)
}

/// Tabulated quantile from a CSV with a `rank` column and a value column
/// (`value` if present, otherwise the second column).
pub fn read_quantile_csv(path: &Path) -> Result<QuantileSpec, CliError> {
    let parse = |m: String| CliError::Parse(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| parse(e.to_string()))?;
    let headers = r.headers().map_err(|e| parse(e.to_string()))?.clone();
    let rank = headers.iter().position(|h| h == "rank").unwrap_or(0);
    let value = headers.iter().position(|h| h == "value").unwrap_or(if rank == 0 { 1 } else { 0 });
    let (mut ranks, mut values) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| parse(e.to_string()))?;
        let field = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .ok_or_else(|| parse(format!("missing column {i}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| parse(e.to_string()))
        };
        ranks.push(field(rank)?);
        values.push(field(value)?);
    }
    let q = QuantileSpec::Piecewise { ranks, values };
    q.validate().map_err(|e| parse(e.to_string()))?;
    Ok(q)
}

pub fn validate(candidate: &QuantileSpec, benchmark: &QuantileSpec, order: Order, n: usize, tol: f64) -> DominanceReport {
    match order {
        Order::First => check_fsd(candidate, benchmark, n, tol),
        Order::Second => check_ssd(candidate, benchmark, n, tol),
    }
}

/// One bundled row solved and compared with its reference values.
pub struct RowResult {
    pub name: String,
    pub summary: Option<Summary>,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl RowResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }
}

pub fn reproduce_row(cfg: &ExperimentConfig, opts: &RunOptions) -> (RowResult, Option<Outcome>) {
    let start = std::time::Instant::now();
    let res = solve(cfg, cfg.problem.unwrap_or(Problem::SsdPpra), opts);
    let seconds = start.elapsed().as_secs_f64();
    match res {
        Ok(o) => {
            let checks = match (&o.solution, &cfg.reference) {
                (Solution::Ppra(p), Some(r)) => {
                    compare_ppra(&cfg.name, p, o.minimal_budget.unwrap_or(f64::NAN), r, &cfg.tolerance)
                }
                _ => Vec::new(),
            };
            let row = RowResult { name: cfg.name.clone(), summary: Some(o.summary()), checks, error: o.failure.clone(), seconds };
            (row, Some(o))
        }
        Err(e) => (RowResult { name: cfg.name.clone(), summary: None, checks: Vec::new(), error: Some(e.to_string()), seconds }, None),
    }
}

pub fn checks_csv(rows: &[RowResult]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Solver(e.to_string());
    for row in rows {
        for c in &row.checks {
            w.serialize(c).map_err(err)?;
        }
        if let Some(e) = &row.error {
            w.serialize(Check {
                case: row.name.clone(),
                quantity: "run".into(),
                computed: e.clone(),
                reference: "success".into(),
                tolerance: "exact".into(),
                pass: false,
            })
            .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Solver(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Solver(e.to_string()))
}

/// Runs every bundled suite, writing `<suite>.csv` and per-row summaries under `dir`.
/// Returns the number of failed rows per suite.
pub fn reproduce_tables(dir: &Path, opts: &RunOptions) -> Result<Vec<(String, usize, usize)>, CliError> {
    let mut out = Vec::new();
    for suite in config::SUITES {
        let rows: Vec<RowResult> = config::suite(suite)?
            .iter()
            .map(|cfg| {
                let (row, _) = reproduce_row(cfg, opts);
                if let Some(s) = &row.summary {
                    write_atomic(&dir.join("rows"), &format!("{}.json", row.name), &to_json(s)?)?;
                }
                Ok(row)
            })
            .collect::<Result<_, CliError>>()?;
        write_atomic(dir, &format!("{suite}.csv"), &checks_csv(&rows)?)?;
        let failed = rows.iter().filter(|r| !r.passed()).count();
        out.push((suite.to_string(), rows.len(), failed));
    }
    Ok(out)
}
