//! Command-line driver: dataset synthesis, de-identification runs and
//! sweeps, evaluation and comparison tables.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod config;
pub mod deid;
pub mod eval;
pub mod paths;
pub mod report;
pub mod synth;

/// Environment variable holding the log filter (`warn` if unset).
pub const LOG_ENV: &str = "PALMDEID_LOG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] palmdeid::Error),
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "palmdeid", version, about = "Palmprint de-identification bench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic hand dataset with a manifest.
    Synth(SynthArgs),
    /// De-identify every sample of a manifest, expanding config sweeps.
    Deid(DeidArgs),
    /// Score a de-identified manifest against its originals.
    Eval(EvalArgs),
    /// Merge evaluation reports into one comparison table.
    Report(ReportArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub identities: u32,
    #[arg(long, default_value_t = 4)]
    pub sessions: u32,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct DeidArgs {
    /// JSON run config; `deid.alpha`, `deid.fusion_set` and `deid.baseline`
    /// may be lists.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Manifest of the original images.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub deid_manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON run config; only its `eval` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write an SVG histogram per sub-run.
    #[arg(long)]
    pub svg: bool,
    /// Trim this fraction from each tail of the de-identified distances.
    #[arg(long)]
    pub trim_fraction: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Report files, or directories holding `report.json` or `*/report.json`.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory for `comparison.md` and `comparison.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth::cmd_synth(&a),
        Command::Deid(a) => deid::cmd_deid(&a),
        Command::Eval(a) => eval::cmd_eval(&a),
        Command::Report(a) => report::cmd_report(&a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
