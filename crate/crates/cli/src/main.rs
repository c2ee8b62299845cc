mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Simulate, reconstruct and analyze lossy polarization channels.
#[derive(Debug, Parser)]
#[command(name = "ntpqpt", version)]
struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate coincidence counts for the beam-splitter channel.
    Simulate(SimulateArgs),
    /// Reconstruct χ from a count table.
    Reconstruct(ReconstructArgs),
    /// Simulate and reconstruct over a grid of Γ, writing one CSV row per run.
    Sweep(SweepArgs),
    /// Report the probability operator of a stored χ.
    #[command(name = "analyze-p")]
    AnalyzeP(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Transmittivity for horizontal polarization.
    #[arg(long, conflicts_with = "gamma")]
    pub t_h: Option<f64>,
    /// Transmittivity for vertical polarization.
    #[arg(long, conflicts_with = "gamma")]
    pub t_v: Option<f64>,
    /// Ratio T_V/T_H with T_H = 1.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Photon pairs per input setting.
    #[arg(long)]
    pub exposure: Option<f64>,
    /// RNG seed; falls back to $NTPQPT_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// poisson or none.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub dark_counts: Option<f64>,
    #[arg(long)]
    pub efficiency: Option<f64>,
    /// Count table to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptimizerArgs {
    /// Optimizer starts, the first from linear inversion.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Function-evaluation budget per start.
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Simplex diameter at which a start stops.
    #[arg(long)]
    pub tol: Option<f64>,
    /// floor (weight max(n, 1)) or drop (ignore empty cells).
    #[arg(long)]
    pub zero_counts: Option<String>,
    /// Initial penalty weight of the trace-preserving fit.
    #[arg(long)]
    pub penalty_start: Option<f64>,
    /// Required ‖P − I‖ of the trace-preserving fit.
    #[arg(long)]
    pub residual_target: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Count table produced by `simulate` or measured.
    #[arg(long)]
    pub counts: PathBuf,
    /// linear, mle, mle-tp or post-selected.
    #[arg(long)]
    pub method: Option<String>,
    /// pauli or elementary-scaled.
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// χ file to compute the process fidelity against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Policy for a reference with λ_max(P) > 1: error or warn.
    #[arg(long)]
    pub unphysical: Option<String>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Fit report to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the bare χ matrix here.
    #[arg(long)]
    pub chi_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma list (0.1,0.5,1) or inclusive range start:stop:step.
    #[arg(long)]
    pub gammas: Option<String>,
    /// Comma list of methods.
    #[arg(long)]
    pub methods: Option<String>,
    /// Independent datasets per Γ.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub exposure: Option<f64>,
    /// Base seed; repeat r uses seed + r.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise: Option<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// CSV file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// χ matrix file.
    #[arg(long)]
    pub chi: PathBuf,
    /// Policy for λ_max(P) > 1: error or warn.
    #[arg(long)]
    pub unphysical: Option<String>,
    /// Also write the analysis as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config::ConfigFile::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Simulate(a) => commands::simulate(a, &cfg),
        Command::Reconstruct(a) => commands::reconstruct(a, &cfg),
        Command::Sweep(a) => commands::sweep(a, &cfg),
        Command::AnalyzeP(a) => commands::analyze_p(a, &cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
