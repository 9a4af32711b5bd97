#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;

#[derive(Parser, Debug)]
#[command(name = "assetflow", version, about = "Asset flow dynamics: simulation, stability, bifurcation and calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a scenario from its (perturbed) starting point and write the trajectory.
    Simulate(SimulateArgs),
    /// Solve and classify equilibria over a grid of cash splits.
    Equilibria(EquilibriaArgs),
    /// Sweep one parameter, classify each node and measure cycles.
    Scan(ScanArgs),
    /// Excursion surface over a grid of initial price offsets.
    Excursion(ExcursionArgs),
    /// Cross-asset shock transmission matrix.
    Contagion(ContagionArgs),
    /// Estimate parameters from price observations.
    Calibrate(CalibrateArgs),
    /// Run the golden scenario checks and a smoke run of every other subcommand.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Preset name or path to a scenario JSON file.
    #[arg(long, default_value = "cavani-nigeria-libya")]
    pub scenario: String,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    /// Sampling interval of the written trajectory.
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    /// Relative kick on the first price when starting from an equilibrium.
    #[arg(long, default_value_t = 0.01)]
    pub perturb: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub atol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct EquilibriaArgs {
    #[command(flatten)]
    pub common: Common,
    /// Divisions of the cash simplex.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Kind {
    Reduced,
    Full,
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: Common,
    /// Parameter to sweep; defaults to the scenario's bifurcation parameter.
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    /// Number of grid nodes, endpoints included.
    #[arg(long, default_value_t = 12)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Kind::Reduced)]
    pub jacobian: Kind,
    #[arg(long, default_value_t = 0.01)]
    pub perturb: f64,
    /// Minimum simulated horizon per node.
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ExcursionArgs {
    #[command(flatten)]
    pub common: Common,
    /// Absolute price offsets, applied on both axes.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,-5,0,5,10")]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 300.0)]
    pub horizon: f64,
    /// Relative kick on the first price added to every node.
    #[arg(long, default_value_t = 0.01)]
    pub seed_fraction: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ContagionArgs {
    #[command(flatten)]
    pub common: Common,
    /// Shock as a fraction of the fundamental value.
    #[arg(long, default_value_t = 0.1)]
    pub shock: f64,
    #[arg(long, default_value_t = 60.0)]
    pub horizon: f64,
    /// Trailing fraction of the horizon used to measure responses.
    #[arg(long, default_value_t = 0.2)]
    pub window: f64,
}

#[derive(Args, Debug, Clone)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Estimation problem JSON. Without it a synthetic problem is built from the scenario.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Free parameter for synthetic problems, `name` or `name:lo:hi`; repeatable.
    #[arg(long = "free")]
    pub free: Vec<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Nls)]
    pub method: MethodArg,
    /// Synthetic observation noise as a fraction of the first fundamental value.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Opening shock on the first price for synthetic problems.
    #[arg(long, default_value_t = 0.5)]
    pub shock: f64,
    #[arg(long, default_value_t = 100)]
    pub observations: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
pub enum MethodArg {
    Nls,
    Sml,
}

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    /// Criteria to run; defaults to 1 through 13.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<u32>,
    #[arg(long, default_value = "out/validate")]
    pub out: PathBuf,
    /// Skip the subcommand smoke runs.
    #[arg(long)]
    pub no_smoke: bool,
}

fn configure_threads() {
    if let Ok(v) = std::env::var("ASSETFLOW_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size worker pool: {e}");
                }
            }
            _ => log::warn!("ignoring ASSETFLOW_THREADS={v}"),
        }
    }
}

/// Parses `argv` and runs the subcommand, returning the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let command_line = argv.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" ");
    let res = match cli.command {
        Command::Simulate(a) => commands::simulate(&a, &command_line).map(|_| true),
        Command::Equilibria(a) => commands::equilibria(&a, &command_line).map(|_| true),
        Command::Scan(a) => commands::scan(&a, &command_line).map(|_| true),
        Command::Excursion(a) => commands::excursion(&a, &command_line).map(|_| true),
        Command::Contagion(a) => commands::contagion(&a, &command_line).map(|_| true),
        Command::Calibrate(a) => commands::calibrate(&a, &command_line).map(|_| true),
        Command::Validate(a) => commands::validate(&a, &command_line),
    };
    match res {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    configure_threads();
    ExitCode::from(run(std::env::args_os()))
}

#[cfg(test)]
mod tests;
