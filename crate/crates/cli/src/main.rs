//! `rsl`: fatigue-life symbolic regression from the command line.

mod artifacts;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rsl_core::RunConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "rsl", version, about = "Symbolic regression of multiaxial fatigue life")]
pub struct Cli {
    /// Seed for sampling, constant-fit restarts and fold shuffling.
    /// Overrides trainer.seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "rsl-out")]
    pub out: PathBuf,
    /// TOML run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every available core. Results do not depend
    /// on this value.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a life formula on a dataset.
    Search(SearchArgs),
    /// Fit the constants of a fixed structure to a dataset.
    Refit(RefitArgs),
    /// Predict lives for operating conditions with a fitted formula.
    Predict(PredictArgs),
    /// Run the empirical critical-plane criteria on a dataset.
    Baseline(BaselineArgs),
    /// K-fold cross-validation of a structure.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Bundled dataset name (data1, data2, data3) or CSV path.
    #[arg(long)]
    pub data: String,
    /// Bundled material name or TOML path.
    #[arg(long)]
    pub material: String,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub input: DataArgs,
}

#[derive(Debug, Args)]
pub struct RefitArgs {
    /// Reference formula name, `tokens=...; constants=...` line, prefix
    /// symbols, infix text, or a file holding one of these. Given constants
    /// seed the fit.
    #[arg(long)]
    pub structure: String,
    #[command(flatten)]
    pub input: DataArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Formula with constants, in any form accepted by `refit`.
    #[arg(long, alias = "structure-with-constants")]
    pub expression: String,
    /// Bundled `table5` or a conditions CSV path.
    #[arg(long)]
    pub conditions: String,
    /// Bundled material name or TOML path.
    #[arg(long)]
    pub material: String,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// cm_axial, cm_shear, bm, kbm, fs, whs, mwhs or all.
    #[arg(long)]
    pub criterion: String,
    #[command(flatten)]
    pub input: DataArgs,
    /// Fixed WHS coefficient; calibrated on the data when omitted.
    #[arg(long)]
    pub whs_k: Option<f64>,
    /// Fixed Brown-Miller normal-strain coefficient.
    #[arg(long, default_value_t = 1.0)]
    pub bm_s0: f64,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub structure: String,
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.trainer.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    let threads = pool.current_num_threads();
    let ctx = commands::Context { cfg, out: cli.out.clone(), threads };
    pool.install(|| match &cli.command {
        Command::Search(a) => commands::search(&ctx, a),
        Command::Refit(a) => commands::refit(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Baseline(a) => commands::baseline(&ctx, a),
        Command::Crossval(a) => commands::crossval(&ctx, a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
