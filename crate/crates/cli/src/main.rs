use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdopt::validation::{Order, DEFAULT_TOL};
use sdopt_cli::config::{self, ExperimentConfig, Problem};
use sdopt_cli::{CliError, RunOptions};

#[derive(Parser)]
#[command(name = "sdopt", version, about = "Stochastic-dominance portfolio solvers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment file, or the name of a bundled experiment.
    #[arg(long)]
    config: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rows of the quantile CSV and verification ranks [default: 10000].
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    tol_budget: f64,
    /// Reserved.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    First,
    Second,
}

#[derive(Subcommand)]
enum Cmd {
    Classic(Common),
    Fsd(Common),
    SsdPpra(Common),
    /// Solve a second-order problem and write only the trainer export.
    ExportNn(Common),
    /// Check dominance between two quantile CSVs (columns rank, value).
    Validate {
        #[arg(long)]
        candidate: PathBuf,
        /// Benchmark CSV; alternatively take the benchmark of `--config`.
        #[arg(long, required_unless_present = "config")]
        benchmark: Option<PathBuf>,
        #[arg(long)]
        config: Option<String>,
        #[arg(long, value_enum, default_value = "second")]
        order: OrderArg,
        #[arg(long, default_value_t = 10_000)]
        grid_points: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve every bundled row and compare with its reference values.
    ReproduceTables {
        #[arg(long, default_value = "tables")]
        out: PathBuf,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        tol_budget: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(config: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(config);
    if !path.exists() && config::BUNDLED.iter().any(|(n, _)| *n == config) {
        return config::bundled(config);
    }
    ExperimentConfig::load(path)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn options(c: &Common) -> RunOptions {
    RunOptions { grid_points: c.grid_points, tol_budget: c.tol_budget, seed: c.seed }
}

fn solve(c: &Common, problem: Problem) -> Result<(), CliError> {
    let cfg = load(&c.config)?;
    let dir = out_dir(c, &cfg);
    let summary = sdopt_cli::run(&cfg, problem, &dir, &options(c))?;
    print!("{}", sdopt_cli::to_json(&summary)?);
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Classic(c) => solve(&c, Problem::Classic),
        Cmd::Fsd(c) => solve(&c, Problem::Fsd),
        Cmd::SsdPpra(c) => solve(&c, Problem::SsdPpra),
        Cmd::ExportNn(c) => {
            let cfg = load(&c.config)?;
            let dir = out_dir(&c, &cfg);
            sdopt_cli::export_nn(&cfg, &dir, &options(&c))?;
            eprintln!("wrote {}", dir.join("nn_export.json").display());
            Ok(())
        }
        Cmd::Validate { candidate, benchmark, config, order, grid_points, tol, out } => {
            let q = sdopt_cli::read_quantile_csv(&candidate)?;
            let q0 = match (benchmark, config) {
                (Some(b), _) => sdopt_cli::read_quantile_csv(&b)?,
                (None, Some(c)) => load(&c)?.benchmark()?.clone(),
                (None, None) => unreachable!("clap requires one of them"),
            };
            let order = match order {
                OrderArg::First => Order::First,
                OrderArg::Second => Order::Second,
            };
            let report = sdopt_cli::validate(&q, &q0, order, grid_points, tol);
            let json = sdopt_cli::to_json(&report)?;
            if let Some(dir) = out {
                sdopt_cli::write_atomic(&dir, "validation.json", &json)?;
            }
            print!("{json}");
            if report.feasible {
                Ok(())
            } else {
                Err(CliError::Infeasible(format!(
                    "violation {:.3e} at rank {:.6}",
                    report.worst_violation, report.worst_location
                )))
            }
        }
        Cmd::ReproduceTables { out, grid_points, tol_budget, seed } => {
            let opts = RunOptions { grid_points, tol_budget, seed };
            let results = sdopt_cli::reproduce_tables(&out, &opts)?;
            let mut failed = 0;
            for (suite, rows, bad) in &results {
                println!("{suite}: {}/{rows} rows pass ({})", rows - bad, out.join(format!("{suite}.csv")).display());
                failed += bad;
            }
            if failed > 0 {
                Err(CliError::Solver(format!("{failed} rows outside tolerance")))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
