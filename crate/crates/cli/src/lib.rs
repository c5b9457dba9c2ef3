//! Command-line front end for the photon-statistics monitor.
//!
//! The binary is a thin wrapper around [`run`]; everything else is exposed so
//! integration tests can drive commands in-process.

pub mod commands;
pub mod config;
pub mod reproduce;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use photon_monitor::decoy::Mode;

pub use config::RunConfig;
pub use reproduce::{reproduce_paper, ReproductionRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {}", .0.name(), .0)]
    Numerical(photon_monitor::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0} reproduction row(s) failed")]
    RowsFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::RowsFailed(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Validation failures while assembling inputs count as config errors.
    pub(crate) fn invalid_config(e: photon_monitor::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<photon_monitor::Error> for CliError {
    fn from(e: photon_monitor::Error) -> Self {
        CliError::Numerical(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "photon-monitor",
    version,
    about = "Photon-statistics monitoring and decoy-state key rates"
)]
pub struct Cli {
    /// Run configuration (`key = value` lines)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the config
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate monitor readings; writes monitor_records.txt and histogram.txt
    Simulate {
        #[arg(long)]
        pulses: Option<u64>,
    },
    /// Estimate the source and compute the key rate; writes key_rate_report.txt
    Analyze {
        /// Monitor-record file (overrides `records`)
        #[arg(long, conflicts_with = "moments")]
        records: Option<PathBuf>,
        /// Use `m_mean`/`m_variance` from the config instead of records
        #[arg(long)]
        moments: bool,
        #[arg(long)]
        mode: Option<Mode>,
        /// Replace the derived interval by a zero-width one at the fitted mean
        #[arg(long)]
        degenerate_interval: bool,
    },
    /// Invert a photoelectron histogram to photon-number statistics
    Invert {
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long)]
        xi: Option<f64>,
    },
    /// Recompute the published results and compare
    ReproducePaper {
        /// Monitor efficiency override
        #[arg(long, hide = true)]
        xi: Option<f64>,
    },
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed);
    }
    let out_dir = cli.out.clone();
    match cli.command {
        Command::Simulate { pulses } => {
            if let Some(n) = pulses {
                cfg.set("pulse_count", n);
            }
            commands::simulate(&cfg, &out_dir.unwrap_or_else(|| ".".into()), stdout)
        }
        Command::Analyze {
            records,
            moments,
            mode,
            degenerate_interval,
        } => {
            let input = if moments {
                commands::AnalyzeInput::Moments
            } else {
                match records.or_else(|| cfg.path("records")) {
                    Some(p) => commands::AnalyzeInput::Records(p),
                    None => {
                        return Err(CliError::Config(
                            "analyze needs --moments, --records or a `records` key".into(),
                        ))
                    }
                }
            };
            let opts = commands::AnalyzeOptions {
                input,
                mode,
                degenerate_interval,
            };
            commands::analyze(&cfg, &opts, &out_dir.unwrap_or_else(|| ".".into()), stdout)
        }
        Command::Invert { histogram, xi } => {
            let path = histogram.or_else(|| cfg.path("histogram")).ok_or_else(|| {
                CliError::Config("invert needs --histogram or a `histogram` key".into())
            })?;
            commands::invert(
                &cfg,
                &path,
                xi,
                &out_dir.unwrap_or_else(|| ".".into()),
                stdout,
            )
        }
        Command::ReproducePaper { xi } => {
            let rows = reproduce_paper(xi);
            let table = reproduce::render(&rows);
            stdout
                .write_all(table.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))?;
            if let Some(dir) = out_dir {
                commands::write_file(&dir, "reproduction_report.txt", table.as_bytes())?;
            }
            match rows.iter().filter(|r| !r.pass).count() {
                0 => Ok(()),
                n => Err(CliError::RowsFailed(n)),
            }
        }
    }
}
