mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cogsim_core::rng::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(name = "cogsim", version, about = "Cycle-level model of a reconfigurable neurosymbolic accelerator")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, env = "COGSIM_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resonator factorization accuracy experiment.
    Factorize(FactorizeArgs),
    /// Simulate a workload on the array model.
    Simulate(SimulateArgs),
    /// Choose spatial or temporal mapping for a batch of convolutions.
    Map(MapArgs),
    /// Schedule a workload across cells and the SIMD unit.
    Schedule(ScheduleArgs),
    /// Arithmetic intensity of bubble streaming and circulant GEMV.
    Roofline(RooflineArgs),
    /// Merge JSON outputs of earlier runs into one summary.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct FactorizeArgs {
    #[arg(long, default_value_t = 3)]
    factors: usize,
    #[arg(long, default_value_t = 8)]
    codes: usize,
    #[arg(long, default_value_t = 1024)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Fraction of query positions flipped before factorizing.
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    /// Relative noise level, applied to similarity and projection.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value = "fp32")]
    precision: String,
    /// Also write per-trial records as CSV.
    #[arg(long)]
    records: Option<PathBuf>,
}

/// Where a workload comes from: a file or a built-in generator.
#[derive(Args, Debug)]
struct WorkloadArgs {
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    workload: Option<PathBuf>,
    /// nvsa_like, mimonet_like or lvrf_like.
    #[arg(long)]
    builtin: Option<String>,
    /// Batches for a built-in workload.
    #[arg(long, default_value_t = 1, requires = "builtin")]
    batches: u64,
    /// Task copies per batch for a built-in workload.
    #[arg(long, default_value_t = 1, requires = "builtin")]
    scale: u64,
    /// Hardware config file; the built-in default profile when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's precision mode.
    #[arg(long)]
    precision: Option<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Write a per-cycle register trace (CSV) of the first small convolution.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[allow(non_snake_case)]
struct MapArgs {
    #[arg(long)]
    k: u64,
    #[arg(long)]
    d: u64,
    #[arg(long = "N")]
    N: u64,
    #[arg(long = "M")]
    M: u64,
    /// Memory reads per cycle available.
    #[arg(long)]
    bandwidth: Option<f64>,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Also compute this baseline and report the ratio.
    #[arg(long, value_parser = ["sequential"])]
    baseline: Option<String>,
    /// Write Gantt rows (CSV).
    #[arg(long)]
    gantt: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RooflineArgs {
    /// start:end:step, inclusive.
    #[arg(long, default_value = "64:4096:64")]
    d_range: String,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
