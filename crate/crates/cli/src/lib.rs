//! Command-line front end for `qvel-core`.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("integration diverged after t = {last_valid_time}")]
    Diverged { last_valid_time: f64 },
    #[error("{0} acceptance criterion(s) failed")]
    CriteriaFailed(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Diverged { .. } => 2,
            CliError::CriteriaFailed(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "qvel",
    version,
    about = "Queues with delayed length-and-velocity announcements"
)]
pub struct Cli {
    /// JSON run configuration; `params` is required, every other section optional.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file (stdout when omitted). Written atomically.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output format. Defaults: csv for simulate and sweep, json otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweeps and validation. Never changes output.
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Integrate one run; trajectory to --out, summary JSON to stdout.
    ///
    /// Config section `simulate`: horizon (default max(200/mu, 60*delay)),
    /// steps_per_delay (64), history ({"kind": "equilibrium_perturbed",
    /// "epsilon": 0.1, "mode": "antisymmetric"} or {"kind": "constant",
    /// "values": [...]}), window_fraction (0.25).
    Simulate,
    /// Region, critical points, design summary and amplitude estimates.
    ///
    /// Config section `analyze`: branches (3), scan_roots (false).
    Analyze,
    /// Evaluate a parameter grid, one row per point.
    ///
    /// Config section `sweep` (required): axes [{"param": "...", "values":
    /// [...]}] with param one of lambda, mu, theta, n_queues, delta, delay,
    /// delay_offset (delay above the first critical delay); simulate (false);
    /// horizon; steps_per_delay (64).
    Sweep,
    /// Run the acceptance criteria; exit code 3 if any fails.
    ///
    /// Config section `validate`: criteria (ids, default all).
    Validate,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match (&cli.config, cli.command) {
        (Some(path), _) => RunConfig::load(path),
        // validation needs no parameters of its own
        (None, Command::Validate) => RunConfig::from_json(
            r#"{"params": {"lambda": 10, "mu": 1, "theta": 1, "n_queues": 2}}"#,
        ),
        (None, _) => Err(CliError::Config("--config is required".into())),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
    println!("{text}");
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate => {
            let format = cli.format.unwrap_or(Format::Csv);
            let mut summary = None;
            let mut failure = None;
            let written = output::emit(out, |w| match commands::simulate(&cfg, format, w) {
                Ok(s) => {
                    summary = Some(s);
                    Ok(())
                }
                Err(e) => {
                    failure = Some(e);
                    Err(std::io::Error::other("simulation failed"))
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            written?;
            if out.is_some() {
                print_json(&summary.expect("set on success"))?;
            }
        }
        Command::Analyze => {
            if cli.format == Some(Format::Csv) {
                return Err(CliError::Config("analyze writes json only".into()));
            }
            let report = commands::analyze(&cfg)?;
            output::emit(out, |w| {
                serde_json::to_writer_pretty(&mut *w, &report)?;
                writeln!(w)
            })?;
        }
        Command::Sweep => {
            let rows = commands::sweep(&cfg)?;
            let format = cli.format.unwrap_or(Format::Csv);
            let mut failure = None;
            let written = output::emit(out, |w| {
                commands::write_sweep(&rows, format, w).map_err(|e| {
                    failure = Some(e);
                    std::io::Error::other("sweep output failed")
                })
            });
            if let Some(e) = failure {
                return Err(e);
            }
            written?;
        }
        Command::Validate => {
            let report = commands::validate(&cfg);
            let format = cli.format.unwrap_or(Format::Json);
            output::emit(out, |w| {
                commands::write_validation(&report, format, w)
                    .map_err(|e| std::io::Error::other(e.to_string()))
            })?;
            if out.is_some() && format == Format::Json {
                // keep the verdict visible when the report went to a file
                for c in &report.criteria {
                    eprintln!(
                        "[{}] {} {}",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.id,
                        c.name
                    );
                }
            }
            let failed = report.criteria.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::CriteriaFailed(failed));
            }
        }
    }
    Ok(())
}
