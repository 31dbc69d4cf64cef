//! `scoredim`: generate datasets, train score networks, estimate intrinsic
//! dimension and run benchmark suites.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::CliError;

#[derive(Debug, Parser)]
#[command(name = "scoredim", version, about = "Intrinsic dimension from diffusion-model score spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: $SCOREDIM_OUT/<command> or results/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (binary blob plus JSON sidecar).
    Generate(GenerateArgs),
    /// Train a score network on a dataset.
    Train(TrainArgs),
    /// Estimate the intrinsic dimension of a dataset.
    Estimate(EstimateArgs),
    /// Run a benchmark suite.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// sphere, nonuniform_sphere, noisy_sphere, spaghetti, union, squares, blobs or subspace_gaussian.
    #[arg(long)]
    pub manifold: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub t_lo: Option<f64>,
    #[arg(long)]
    pub t_hi: Option<f64>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub r1: Option<f64>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub n_each: Option<usize>,
    #[arg(long)]
    pub side: Option<usize>,
    /// Also write a CSV copy.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset blob written by `generate`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    #[arg(long)]
    pub sigma_max: Option<f64>,
    /// Stop (and checkpoint) at this step without changing the schedule.
    #[arg(long)]
    pub stop_at: Option<u64>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Trained,
    Empirical,
    Subspace,
    Exact,
    Corrupted,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub field: Option<FieldKind>,
    /// Field wrapped by `--field corrupted`.
    #[arg(long, value_enum)]
    pub inner: Option<FieldKind>,
    /// Noise-to-score norm ratio for `--field corrupted`.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Checkpoint manifest for trained fields.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Subspace dimension when no dataset is given.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise level at which scores are evaluated.
    #[arg(long)]
    pub sigma_t0: Option<f64>,
    /// Number of base points J.
    #[arg(long)]
    pub base_points: Option<usize>,
    /// Score samples K per base point (default 4d).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Baselines such as `mle:5,mle:20,local_pca:20,ppca`.
    #[arg(long, value_delimiter = ',')]
    pub baselines: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnlyArg {
    /// Baselines only; no training.
    Baselines,
    Table,
    Nonuniform,
    Noise,
    Offmanifold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Smoke,
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Built-in suite used when no `--config` plan file is given.
    #[arg(long, value_enum, default_value = "desk")]
    pub profile: ProfileArg,
    /// Restrict the run; may be repeated.
    #[arg(long, value_enum)]
    pub only: Vec<OnlyArg>,
    /// Reuse finished checkpoints from a previous run in the same directory.
    #[arg(long)]
    pub reuse_checkpoints: bool,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp_secs().init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))?;
    }
    let global = commands::Global { config: cli.config, seed: cli.seed, out: cli.out };
    match cli.command {
        Command::Generate(a) => commands::generate(&global, &a),
        Command::Train(a) => commands::train(&global, &a),
        Command::Estimate(a) => commands::estimate(&global, &a),
        Command::Benchmark(a) => commands::benchmark(&global, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
