//! `spheroid`: batch front end for simulation, sweeps, emulator training,
//! sensitivity analysis, calibration and group comparisons.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spheroid_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "spheroid",
    version,
    about = "Tumour spheroid simulator and UQ pipeline"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SPHEROID_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the simulator and write per-day aggregates, cell tables and metrics.
    Simulate(SimulateArgs),
    /// Latin-hypercube parameter sweep producing emulator training data.
    Sweep(SweepArgs),
    /// Fit one Gaussian-process emulator per day of a sweep.
    GpTrain(GpTrainArgs),
    /// Sobol indices of a trained emulator.
    Sobol(SobolArgs),
    /// MCMC calibration of observed areas against trained emulators.
    Calibrate(CalibrateArgs),
    /// Morphology metrics of a cell table.
    Measure(MeasureArgs),
    /// Routed group comparisons between scenario metric tables.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunSettings {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the collagen density (mg/ml: 2.5, 4 or 6).
    #[arg(long)]
    pub density: Option<f64>,
    /// Overrides the locomotion scale.
    #[arg(long)]
    pub locomotion_scale: Option<f64>,
    /// Overrides the simulated duration in days.
    #[arg(long)]
    pub days: Option<f64>,
    /// Start from the coarse sweep timesteps instead of the fine defaults.
    #[arg(long)]
    pub desk: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunSettings,
    /// Parameter file (TOML with [metabolic] and [phenotype] tables).
    #[arg(long, conflicts_with = "group")]
    pub params: Option<PathBuf>,
    /// Use a built-in parameter set: small, medium or large.
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Skip the per-cell tables.
    #[arg(long)]
    pub no_cells: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunSettings,
    /// Parameter space: calibrated (4 parameters) or full (7).
    #[arg(long, default_value = "calibrated")]
    pub space: String,
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Days to record, comma separated (default: every simulated day from 1).
    #[arg(long, value_delimiter = ',')]
    pub record_days: Vec<u32>,
    /// Samples simulated between checkpoint writes.
    #[arg(long, default_value_t = 16)]
    pub chunk: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GpTrainArgs {
    /// Sweep CSV.
    #[arg(long)]
    pub training: PathBuf,
    /// Only fit these days (default: all).
    #[arg(long, value_delimiter = ',')]
    pub fit_days: Vec<u32>,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Held-out sweep CSV for Nash–Sutcliffe scoring.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SobolArgs {
    /// Emulator artifact (JSON).
    #[arg(long)]
    pub gp: PathBuf,
    /// Base sample count, a power of two of at least 1024.
    #[arg(long, default_value_t = 8192)]
    pub samples: usize,
    #[arg(long)]
    pub second_order: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Observation CSV with columns group, day, area_um2.
    #[arg(long)]
    pub observations: PathBuf,
    /// Emulator artifacts, one per observed day.
    #[arg(long, num_args = 1.., required = true)]
    pub gp: Vec<PathBuf>,
    /// Prior support CSV (parameter, lower, upper); defaults to the
    /// emulator bounds.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 5000)]
    pub draws: usize,
    #[arg(long, default_value_t = 3000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest acceptable split-R̂.
    #[arg(long, default_value_t = spheroid_core::uq::RHAT_WARNING)]
    pub max_rhat: f64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Cell table as written by `simulate`.
    #[arg(long)]
    pub cells: PathBuf,
    /// Cell radius (µm).
    #[arg(long, default_value_t = 6.0)]
    pub radius: f64,
    /// Single-linkage distance (µm); defaults to the adhesion contact range.
    #[arg(long)]
    pub link_distance: Option<f64>,
    /// Raster pixel size (µm).
    #[arg(long)]
    pub pixel: Option<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scenario metric tables as name=path; at least two.
    #[arg(long = "scenario", num_args = 1.., required = true)]
    pub scenarios: Vec<String>,
    /// Day to compare (default: the last day present in every table).
    #[arg(long)]
    pub day: Option<u32>,
    #[arg(long, default_value_t = spheroid_core::stats::ALPHA)]
    pub alpha: f64,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Nonzero exit with a specific code after the diagnostic output was written.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Exit>() {
        return e.code;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Resource { .. }) => 4,
        Some(e) if e.is_input_error() => 2,
        Some(_) => 3,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 3,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::GpTrain(a) => commands::gp_train(a),
        Command::Sobol(a) => commands::sobol(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Measure(a) => commands::measure(a),
        Command::Compare(a) => commands::compare(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
