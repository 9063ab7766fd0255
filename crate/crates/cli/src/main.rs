//! `thinsets`: config-driven experiment runner.
//!
//! ```text
//! thinsets run --config FILE [--workers N] [--out DIR]
//! thinsets validate --config FILE
//! ```
//!
//! Exit codes: 0 success, 1 i/o failure, 2 config error, 3 numeric failure,
//! 4 zero-acceptance conditioning. Failures print a JSON error document on
//! stderr.

mod config;
mod error;
mod experiments;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;
use crate::table::{write_atomic, write_json};

#[derive(Parser)]
#[command(
    name = "thinsets",
    version,
    about = "Entropy projection, Gibbs conditioning and tree calibration experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; overrides `output.dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and print its diagnostics as JSON (empty: runnable).
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Serialize)]
struct TableEntry {
    name: &'static str,
    file: String,
    rows: usize,
    columns: &'static [&'static str],
}

/// Everything needed to reproduce a run: at the same worker count the
/// config echo regenerates byte-identical tables.
#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    experiment: String,
    seed: u64,
    workers: usize,
    wall_time_secs: f64,
    format: Format,
    tables: Vec<TableEntry>,
    config: Value,
}

fn run(config: &Path, workers: Option<usize>, out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let cfg: ExperimentConfig = config::load(config).map_err(CliError::Config)?;
    let workers = workers.unwrap_or_else(thinsets::rng::default_workers);
    if workers == 0 {
        return Err(CliError::Config(vec![config::Diagnostic {
            path: "--workers".into(),
            message: "must be at least 1".into(),
        }]));
    }
    // Only the calibration sweep uses the global pool; a second
    // initialization (tests) is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();

    let start = Instant::now();
    let tables = experiments::run_experiment(&cfg, workers)?;
    let wall_time_secs = start.elapsed().as_secs_f64();

    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut entries = Vec::with_capacity(tables.len());
    for t in &tables {
        let file = match cfg.output.format {
            Format::Csv => {
                let file = format!("{}.csv", t.name);
                write_atomic(&dir.join(&file), &t.to_csv()?)?;
                file
            }
            Format::Json => {
                let file = format!("{}.json", t.name);
                write_json(&dir.join(&file), &t.to_json())?;
                file
            }
        };
        entries.push(TableEntry {
            name: t.name,
            file,
            rows: t.rows.len(),
            columns: t.columns,
        });
    }
    let manifest = RunManifest {
        tool: "thinsets",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.clone(),
        seed: cfg.seed,
        workers,
        wall_time_secs,
        format: cfg.output.format,
        tables: entries,
        config: cfg.echo.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn fail(e: &CliError) -> ExitCode {
    let doc = serde_json::to_string(&e.doc()).unwrap_or_else(|_| format!("{{\"message\": {:?}}}", e.to_string()));
    eprintln!("{doc}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, workers, out } => match run(&config, workers, out) {
            Ok(manifest) => {
                println!("{}", manifest.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Validate { config } => {
            let diags = config::validate(&config);
            println!(
                "{}",
                serde_json::to_string_pretty(&diags).expect("diagnostics serialize")
            );
            if diags.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
    }
}
