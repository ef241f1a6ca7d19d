//! `dwmtj` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dwmtj", version, about = "Domain-wall MTJ two-layer learning simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for results, the resolved config and the log.
    #[arg(long, short, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps; defaults to the available cores.
    #[arg(long, short, global = true)]
    pub jobs: Option<usize>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write result.json.
    Train,
    /// Run a parameter sweep and write sweep.csv, sweep_summary.csv, sweep.json.
    Sweep(SweepArgs),
    /// Device calculators: stray field, synapse levels, coupling ratio.
    Design(DesignArgs),
    /// Energy versus hidden size and ADC resolution.
    Energy(EnergyArgs),
    /// Load the configured dataset and report its shape.
    DatasetCheck,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Axis name; overrides the config's [sweep] section.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub w_nm: Option<f64>,
    #[arg(long)]
    pub t_nm: Option<f64>,
    #[arg(long)]
    pub s_nm: Option<f64>,
    #[arg(long)]
    pub l_mtj_nm: Option<f64>,
    #[arg(long)]
    pub m_s_tesla: Option<f64>,
    /// Uncoupled wall velocity, m/s.
    #[arg(long)]
    pub v0: Option<f64>,
    /// Wall velocity under neighbor inhibition, m/s.
    #[arg(long)]
    pub v_inhib: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Hidden sizes to run; overrides [energy_sweep].m_values.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// ADC resolutions; overrides [energy_sweep].bits.
    #[arg(long, value_delimiter = ',')]
    pub bits: Option<Vec<u32>>,
    /// Fit the ADC coefficient so the config's own run totals this many joules.
    #[arg(long)]
    pub calibrate_to: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Train => commands::train(&cli.common),
        Command::Sweep(a) => commands::sweep(&cli.common, &a),
        Command::Design(a) => commands::design(&cli.common, &a),
        Command::Energy(a) => commands::energy(&cli.common, &a),
        Command::DatasetCheck => commands::dataset_check(&cli.common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
