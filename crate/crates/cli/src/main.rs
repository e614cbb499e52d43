use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

/// Twin-field QKD key-rate analysis and link simulation.
#[derive(Debug, Parser)]
#[command(name = "tfqkd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and check a measurement table or session file.
    Ingest(IngestArgs),
    /// Key rates for every row of a measurement table.
    Keyrate(KeyrateArgs),
    /// Link-model key rate against loss.
    Sweep(SweepArgs),
    /// Run a Monte Carlo session.
    Simulate(SimulateArgs),
    /// Check the toolkit against the bundled reference data.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub(crate) struct OutArgs {
    /// Directory for output files; created if missing.
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct IngestArgs {
    pub(crate) path: PathBuf,
    /// attenuation, combos or session.
    #[arg(long, default_value = "attenuation")]
    pub(crate) schema: String,
    #[arg(long)]
    pub(crate) strict: bool,
    #[command(flatten)]
    pub(crate) out: OutArgs,
}

#[derive(Debug, Args)]
pub(crate) struct KeyrateArgs {
    /// original, send-not-send or curty.
    #[arg(long)]
    pub(crate) protocol: String,
    /// Measurement table; the bundled one for the protocol when omitted.
    #[arg(long)]
    pub(crate) input: Option<PathBuf>,
    /// Schema of `--input`; guessed from the protocol when omitted.
    #[arg(long)]
    pub(crate) schema: Option<String>,
    /// Protocol settings as JSON.
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Use the measured w-w gain instead of the vacuum gain for Q_w.
    #[arg(long)]
    pub(crate) measured_w: bool,
    #[arg(long)]
    pub(crate) strict: bool,
    #[command(flatten)]
    pub(crate) out: OutArgs,
}

#[derive(Debug, Args)]
pub(crate) struct SweepArgs {
    /// Sweep settings as JSON; built-in defaults when omitted.
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Overrides the protocol of the config.
    #[arg(long)]
    pub(crate) protocol: Option<String>,
    #[command(flatten)]
    pub(crate) out: OutArgs,
}

#[derive(Debug, Args)]
pub(crate) struct SimulateArgs {
    /// Session settings as JSON.
    #[arg(long)]
    pub(crate) config: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    #[command(flatten)]
    pub(crate) out: OutArgs,
}

#[derive(Debug, Args)]
pub(crate) struct ValidateArgs {
    /// Replace the relative rate and capacity tolerances, in percent.
    #[arg(long)]
    pub(crate) tolerance: Option<f64>,
    /// Scale the Monte Carlo sizes down by 20x.
    #[arg(long)]
    pub(crate) quick: bool,
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Attenuation table to check instead of the bundled one.
    #[arg(long)]
    pub(crate) attenuation_table: Option<PathBuf>,
    /// Six-combination table to check instead of the bundled one.
    #[arg(long)]
    pub(crate) combo_table: Option<PathBuf>,
    /// Print every comparison, not just those of failing criteria.
    #[arg(long, short)]
    pub(crate) verbose: bool,
    #[command(flatten)]
    pub(crate) out: OutArgs,
}

/// Failure classes, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Validation(String),
}

impl From<tfqkd::Error> for CliError {
    fn from(e: tfqkd::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("invalid JSON: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Keyrate(a) => commands::keyrate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Validate(a) => commands::validate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Validation(m)) => {
            eprintln!("validation failed: {m}");
            ExitCode::from(3)
        }
    }
}
