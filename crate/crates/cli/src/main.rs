//! `provgd`: simulate datasets, fit Bayes and PrO ensembles, run the
//! misspecification diagnostic and the tomography inversion.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! divergence, 4 unsupported model/diagnostic combination.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use provgd::kernels::{BandwidthPolicy, KernelFamily};
use provgd::tomo::ScenarioKind;
use provgd::vgd::Target;

use config::{kernel_from_flags, load, DiagnoseConfig, FitConfig, KgdConfig, SimulateConfig, TomoConfig, VgdSettings};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn usage_from(e: provgd::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "provgd", version, about = "Bayes and PrO posteriors by variational gradient descent")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "PROVGD_OUT", default_value = "provgd-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a simulation task.
    Simulate(SimulateArgs),
    /// Run VGD for one target on a dataset.
    Fit(FitArgs),
    /// Compare Bayes and PrO predictives against a simulated well-specified null.
    Diagnose(DiagnoseArgs),
    /// Bayes and PrO travel-time tomography on a sensor scenario.
    Tomo(TomoArgs),
    /// Recompute the KGD of a stored ensemble.
    Kgd(KgdArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// e.g. `sigmoid-well`, `linear-misspec`, `sinusoid-misspec:20`.
    #[arg(long)]
    task: Option<String>,
    #[arg(short = 'n', long = "n")]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VgdArgs {
    /// Number of particles N.
    #[arg(long = "particles", short = 'N')]
    particles: Option<usize>,
    /// Number of iterations T.
    #[arg(long = "iterations", short = 'T')]
    iterations: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_parser = parse_family)]
    kernel: Option<KernelFamily>,
    /// Fixed kernel length scale (switches off the median heuristic).
    #[arg(long)]
    lengthscale: Option<f64>,
    #[arg(long, value_parser = parse_bandwidth)]
    bandwidth: Option<BandwidthPolicy>,
    #[arg(long)]
    prior_sd: Option<f64>,
    #[arg(long)]
    init_sd: Option<f64>,
    /// KGD cadence; 0 turns the trace off.
    #[arg(long)]
    kgd_every: Option<usize>,
}

impl VgdArgs {
    fn settings(&self, file: &VgdSettings) -> VgdSettings {
        VgdSettings {
            particles: self.particles,
            iterations: self.iterations,
            epsilon: self.epsilon,
            kernel: kernel_from_flags(file.kernel, self.kernel, self.lengthscale, self.bandwidth),
            prior_sd: self.prior_sd,
            init_sd: self.init_sd,
            kgd_every: self.kgd_every,
        }
    }
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    match s {
        "gaussian" => Ok(KernelFamily::Gaussian),
        "imq" => Ok(KernelFamily::InverseMultiquadric),
        _ => Err(format!("unknown kernel '{s}' (expected gaussian or imq)")),
    }
}

fn parse_bandwidth(s: &str) -> Result<BandwidthPolicy, String> {
    match s {
        "fixed" => Ok(BandwidthPolicy::Fixed),
        "median" => Ok(BandwidthPolicy::MedianPerIteration),
        "median-log-n" => Ok(BandwidthPolicy::MedianLogN),
        _ => Err(format!("unknown bandwidth policy '{s}' (expected fixed, median or median-log-n)")),
    }
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    match s {
        "well" | "well_specified" => Ok(ScenarioKind::WellSpecified),
        "misspec" | "misspecified_sensors" => Ok(ScenarioKind::MisspecifiedSensors),
        _ => Err(format!("unknown scenario kind '{s}' (expected well or misspec)")),
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    target: Option<Target>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    vgd: VgdArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    /// Number of null replicates M.
    #[arg(long = "replicates", short = 'M')]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    warm_start: Option<bool>,
    #[arg(long)]
    max_failed_fraction: Option<f64>,
    #[command(flatten)]
    vgd: VgdArgs,
}

#[derive(Args)]
struct TomoArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ScenarioKind>,
    /// `desk` or `paper`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long = "grid-size", short = 'G')]
    grid_size: Option<usize>,
    #[arg(long = "particles", short = 'N')]
    particles: Option<usize>,
    #[arg(long = "iterations", short = 'T')]
    iterations: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    kgd_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct KgdArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ensemble CSV with its JSON sidecar next to it.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    target: Option<Target>,
    #[arg(long)]
    prior_sd: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure {n} threads: {e}")))?;
    }
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate(a) => {
            let file: SimulateConfig = load(a.config.as_deref())?;
            commands::simulate(file.merge(SimulateConfig { task: a.task, n: a.n, seed: a.seed }), out)
        }
        Command::Fit(a) => {
            let file: FitConfig = load(a.config.as_deref())?;
            let vgd = a.vgd.settings(&file.vgd);
            commands::fit(file.merge(FitConfig { dataset: a.dataset, task: a.task, target: a.target, seed: a.seed, vgd }), out)
        }
        Command::Diagnose(a) => {
            let file: DiagnoseConfig = load(a.config.as_deref())?;
            let vgd = a.vgd.settings(&file.vgd);
            let flags = DiagnoseConfig {
                dataset: a.dataset,
                scenario: a.scenario,
                task: a.task,
                replicates: a.replicates,
                seed: a.seed,
                warm_start: a.warm_start,
                max_failed_fraction: a.max_failed_fraction,
                vgd,
            };
            commands::diagnose(file.merge(flags), out)
        }
        Command::Tomo(a) => {
            let file: TomoConfig = load(a.config.as_deref())?;
            let flags = TomoConfig {
                scenario: a.scenario,
                kind: a.kind,
                preset: a.preset,
                grid_size: a.grid_size,
                particles: a.particles,
                iterations: a.iterations,
                epsilon: a.epsilon,
                kgd_every: a.kgd_every,
                seed: a.seed,
            };
            commands::tomo(file.merge(flags), out)
        }
        Command::Kgd(a) => {
            let file: KgdConfig = load(a.config.as_deref())?;
            let flags =
                KgdConfig { ensemble: a.ensemble, dataset: a.dataset, task: a.task, target: a.target, kernel: None, prior_sd: a.prior_sd };
            commands::kgd(file.merge(flags), out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
