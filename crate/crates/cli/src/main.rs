//! `bbhazard`: simulate studies, fit additive discrete hazard models on
//! person-level CSV data and predict from fitted models.
//!
//! Exit codes: 0 success, 2 configuration or input validation failure,
//! 3 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Mode;

#[derive(Debug, Parser)]
#[command(name = "bbhazard", version, about = "Additive discrete time-to-event models fitted by batchwise backfitting")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (sets `sim.seed` and `engine.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (simulate, fit) or file (predict, report).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Override a config entry, e.g. `--set engine.step_length=0.2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation study and write its CSV and JSON reports.
    Simulate {
        /// Also write the person-level data of each replication.
        #[arg(long)]
        write_data: bool,
    },
    /// Fit a model to person-level CSV data.
    Fit {
        /// Input CSV (overrides `data.path`).
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Also write the refit coefficient trajectories.
        #[arg(long)]
        trajectories: bool,
    },
    /// Predict hazard or survival curves from a fitted model.
    Predict {
        /// `model.json` written by `fit`.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Output quantity (default: survival).
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// CSV with one covariate query per row.
        #[arg(long, value_name = "PATH")]
        query: Option<PathBuf>,
        /// Covariate varied by `marginal_survival`.
        #[arg(long)]
        vary: Option<String>,
        /// Grid size for a continuous `--vary` covariate (default 50).
        #[arg(long)]
        grid_points: Option<usize>,
        /// Comma-separated intervals.
        #[arg(long, value_delimiter = ',')]
        times: Vec<u32>,
    },
    /// Summarize a `fit_report.json` or `study_summary.json`.
    Report {
        /// Report file or the directory holding it.
        path: PathBuf,
    },
}

/// A failed run: exit code and a one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    pub fn context(mut self, prefix: &str) -> Self {
        self.message = format!("{prefix}: {}", self.message);
        self
    }
}

impl From<bbhazard::Error> for Failure {
    fn from(e: bbhazard::Error) -> Self {
        Self {
            code: if e.is_validation() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("sim.seed={seed}"));
        overrides.push(format!("engine.seed={seed}"));
    }
    let mut cfg = config::load(cli.config.as_deref(), &overrides)?;
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(Failure::config("threads: must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { write_data } => commands::simulate(&cfg, write_data),
        Command::Fit { data, trajectories } => commands::fit(cfg, data, trajectories),
        Command::Predict {
            model,
            mode,
            query,
            vary,
            grid_points,
            times,
        } => {
            let p = &mut cfg.predict;
            p.model = model.or(p.model.take());
            p.mode = mode.unwrap_or(p.mode);
            p.query = query.or(p.query.take());
            p.vary = vary.or(p.vary.take());
            p.grid_points = grid_points.unwrap_or(p.grid_points);
            if !times.is_empty() {
                p.times = times;
            }
            commands::predict(&cfg)
        }
        Command::Report { path } => commands::report(&path, cfg.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg: Vec<&str> = f.message.split_whitespace().collect();
            eprintln!("error: {}", msg.join(" "));
            ExitCode::from(f.code)
        }
    }
}
