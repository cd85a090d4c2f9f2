//! Command-line surface for the factor SV sampler: simulate / fit / diag /
//! summarize, flat key-value configs, CSV persistence, and manifests that
//! reproduce a run bit-for-bit.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{RestrictionKind, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "fsv",
    version,
    about = "Bayesian factor stochastic volatility estimation",
    long_about = "Fits multivariate factor stochastic volatility models by full \
conditional Gibbs sampling with optional shallow/deep interweaving boosts. \
Thread count follows RAYON_NUM_THREADS; results are bit-identical for any \
thread count given the same seed."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate returns and latent truth from the data-generating process.
    Simulate(SimulateArgs),
    /// Fit the model to a returns CSV and persist posterior draws.
    Fit(Box<FitArgs>),
    /// Inefficiency factors and autocorrelations for a draws directory.
    Diag(DiagArgs),
    /// Posterior summary table for a draws directory.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Use the built-in 10-series, 2-factor benchmark configuration.
    #[arg(long)]
    table_ai: bool,
    /// Flat key-value file with loadings and SV parameters.
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Number of time points.
    #[arg(long, default_value_t = 1000)]
    t: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for returns.csv, truth_h.csv, truth_f.csv, params.txt.
    #[arg(long, default_value = "fsv-sim")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Returns CSV (header row of series names, one row per time point).
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Flat key-value config file; flags below override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Re-run exactly the configuration recorded in a manifest.
    #[arg(long, value_name = "FILE", conflicts_with = "config")]
    from_manifest: Option<PathBuf>,
    /// Output directory for the draw CSVs and manifest.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    factors: Option<usize>,
    /// lower-triangular or unrestricted.
    #[arg(long)]
    restriction: Option<String>,
    /// none, shallow, deep, or both.
    #[arg(long)]
    interweaving: Option<String>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subtract each series' sample mean before fitting.
    #[arg(long)]
    demean: bool,
    /// Persist full latent paths per kept draw (memory-heavy).
    #[arg(long)]
    store_latents: bool,
    /// Track the exact-transformation invariants of the interweaving step.
    #[arg(long)]
    track_invariants: bool,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, value_name = "DIR")]
    draws_dir: PathBuf,
    /// ar-spectral or initial-positive.
    #[arg(long, default_value = "ar-spectral")]
    estimator: String,
    /// Largest autocorrelation lag written to acf_loadings.csv.
    #[arg(long, default_value_t = 100)]
    max_lag: usize,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long, value_name = "DIR")]
    draws_dir: PathBuf,
    /// maximin, diagonal, or none.
    #[arg(long, default_value = "maximin")]
    sign_identify: String,
    /// Reorder columns by their maximum median loading before summarizing.
    #[arg(long)]
    reorder_columns: bool,
    /// ar-spectral or initial-positive.
    #[arg(long, default_value = "ar-spectral")]
    estimator: String,
}

fn fit_config(args: &FitArgs) -> Result<RunConfig, CliError> {
    let mut cfg = if let Some(manifest) = &args.from_manifest {
        RunConfig::load(manifest)?
    } else if let Some(config) = &args.config {
        RunConfig::load(config)?
    } else {
        RunConfig::default()
    };
    if let Some(input) = &args.input {
        cfg.input = input.clone();
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(v) = args.factors {
        cfg.factors = v;
    }
    if let Some(v) = &args.restriction {
        cfg.restriction = RestrictionKind::parse(v)?;
    }
    if let Some(v) = &args.interweaving {
        cfg.interweaving = v.clone();
    }
    if let Some(v) = args.draws {
        cfg.draws = v;
    }
    if let Some(v) = args.burn_in {
        cfg.burn_in = v;
    }
    if let Some(v) = args.thin {
        cfg.thin = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.demean {
        cfg.demean = true;
    }
    if args.store_latents {
        cfg.store_latents = true;
    }
    if args.track_invariants {
        cfg.track_invariants = true;
    }
    if cfg.input.as_os_str().is_empty() {
        return Err(CliError::Config(
            "fit needs --input FILE (or a config/manifest providing one)".into(),
        ));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => commands::cmd_simulate(
            args.table_ai,
            args.params.as_deref(),
            args.t,
            args.seed,
            &args.out,
        ),
        Command::Fit(args) => {
            let cfg = fit_config(&args)?;
            commands::cmd_fit(&cfg)
        }
        Command::Diag(args) => commands::cmd_diag(&args.draws_dir, &args.estimator, args.max_lag),
        Command::Summarize(args) => commands::cmd_summarize(
            &args.draws_dir,
            &args.sign_identify,
            args.reorder_columns,
            &args.estimator,
        ),
    }
}

/// Entry point used by the binary and by tests. Returns the process exit
/// code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
