//! `gwts` — groundwater time-series analyses from the command line.
//!
//! Exit status: 0 on success, 1 on I/O or computation errors, 2 on usage
//! errors (bad flags, out-of-range settings, bad config values).

mod commands;
mod config;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use gwts::dataio::Aggregation;
use serde::Deserialize;

use config::{layer, Config};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Failed(e)
    }
}

impl From<gwts::Error> for CliError {
    fn from(e: gwts::Error) -> Self {
        Self::Failed(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Failed(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "gwts", version, about = "VAR modelling, diagnostics, copula dependence and shelf-life for groundwater series")]
struct Cli {
    /// TOML file with default settings; flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select the lag order and fit a VAR to one station's training series
    Fit(FitArgs),
    /// Residual diagnostics and OLS-CUSUM for a fitted model
    Diagnose(DiagnoseArgs),
    /// Granger causality, impulse responses and variance decomposition
    Structural(StructuralArgs),
    /// Copula directional dependence network between stations
    Cdd(CddArgs),
    /// Rolling-origin forecast errors and model shelf-life
    Shelflife(ShelflifeArgs),
    /// Run the whole pipeline on the bundled fixtures and write a report
    Reproduce(ReproduceArgs),
}

/// Where the data come from and which slice of it to model.
#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Long-format CSV with columns station,date,variable,value[,latitude,longitude]
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,

    /// Station to model [default: first station in the file]
    #[arg(long)]
    pub station: Option<String>,

    /// Comma-separated variables in model order [default: all, in file order]
    #[arg(long, value_delimiter = ',')]
    pub variables: Vec<String>,

    /// How rows within one quarter are combined
    #[arg(long, default_value = "mean", value_parser = clap::value_parser!(Aggregation))]
    pub aggregation: Aggregation,

    /// Interpolate interior gaps linearly instead of failing on them
    #[arg(long)]
    pub fill_gaps: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divisor {
    /// T − p − (np + 1)
    #[default]
    Df,
    /// T − p
    Obs,
}

#[derive(Args, Debug, Default)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Fixed lag order (skips the choice by information criteria)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), conflicts_with = "auto_lag")]
    pub lag: Option<u64>,

    /// Choose p by information-criteria consensus (the behaviour without --lag)
    #[arg(long)]
    pub auto_lag: bool,

    /// Largest lag order searched
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub p_max: u64,

    /// Fraction of the series used for fitting; the rest is held out
    #[arg(long, default_value_t = 0.7)]
    pub holdout: f64,

    /// Fit on the whole series instead of the training part
    #[arg(long)]
    pub no_holdout: bool,

    /// Residual covariance divisor
    #[arg(long, value_enum, default_value_t = Divisor::Df)]
    pub divisor: Divisor,

    /// Difference the series this many times before fitting
    #[arg(long, default_value_t = 0)]
    pub difference: u64,

    /// Output directory
    #[arg(long, default_value = "gwts-out", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Default)]
pub struct DiagnoseArgs {
    /// Fitted model [default: <out>/var_model.json]
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Significance level for every reject flag
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Portmanteau lags
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub portmanteau_lags: u64,

    /// ARCH-LM lags
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub arch_lags: u64,

    /// Output directory
    #[arg(long, default_value = "gwts-out", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Default)]
pub struct StructuralArgs {
    /// Fitted model [default: <out>/var_model.json]
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Impulse-response horizon in quarters
    #[arg(long = "h", visible_alias = "horizon", default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub h: u64,

    /// Horizon of the variance decomposition
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub fevd_h: u64,

    /// Bootstrap replicates for the response bands (0 disables them)
    #[arg(long, default_value_t = 100)]
    pub boot: u64,

    /// Coverage of the bootstrap bands
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,

    /// Bootstrap seed; falls back to GWTS_SEED, required when --boot > 0
    #[arg(long)]
    pub seed: Option<u64>,

    /// Variables whose causal effect is tested, against all others
    /// [default: each variable in turn]
    #[arg(long, value_delimiter = ',')]
    pub cause: Vec<String>,

    /// Cholesky ordering of the shocks [default: model order]
    #[arg(long, value_delimiter = ',')]
    pub order: Vec<String>,

    /// Significance level of the Granger tests
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Compute responses even if the model is not stable
    #[arg(long)]
    pub allow_unstable: bool,

    /// Output directory
    #[arg(long, default_value = "gwts-out", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Default)]
pub struct CddArgs {
    /// Long-format CSV with columns station,date,variable,value[,latitude,longitude]
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,

    /// How rows within one quarter are combined
    #[arg(long, default_value = "mean", value_parser = clap::value_parser!(Aggregation))]
    pub aggregation: Aggregation,

    /// Interpolate interior gaps linearly before comparing stations
    #[arg(long)]
    pub fill_gaps: bool,

    /// Variable compared across stations [default: first variable in the file]
    #[arg(long)]
    pub variable: Option<String>,

    /// Keep a pair when either direction reaches this CDD
    #[arg(long, default_value_t = 0.95)]
    pub threshold: f64,

    /// Output directory
    #[arg(long, default_value = "gwts-out", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecasterKind {
    #[default]
    Var,
    SeasonalNaive,
}

#[derive(Args, Debug, Default)]
pub struct ShelflifeArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Forecaster under evaluation
    #[arg(long, value_enum, default_value_t = ForecasterKind::Var)]
    pub forecaster: ForecasterKind,

    /// VAR lag order [default: chosen by information criteria at every origin]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub lag: Option<u64>,

    /// Largest lag searched when --lag is absent
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub p_max: u64,

    /// Season length of the seasonal-naive forecaster
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub period: u64,

    /// APE threshold defining the shelf life
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,

    /// Longest horizon evaluated [default: series length − min-train]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub h_max: Option<u64>,

    /// Observations before the first origin [default: floor(holdout · T)]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_train: Option<u64>,

    /// Training fraction used when --min-train is absent
    #[arg(long, default_value_t = 0.7)]
    pub holdout: f64,

    /// Variable whose forecast errors are scored [default: last variable]
    #[arg(long)]
    pub target: Option<String>,

    /// Regress on every APE observation instead of per-horizon means
    #[arg(long)]
    pub pooled: bool,

    /// Output directory
    #[arg(long, default_value = "gwts-out", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Default)]
pub struct ReproduceArgs {
    /// Directory holding patiyapura.csv and vadodara_gwl.csv
    #[arg(long, default_value = "fixtures", value_name = "DIR")]
    pub fixtures: PathBuf,

    /// Bootstrap replicates for the response bands
    #[arg(long, default_value_t = 100)]
    pub boot: u64,

    /// Bootstrap seed; falls back to GWTS_SEED, then 42
    #[arg(long)]
    pub seed: Option<u64>,

    /// Report directory
    #[arg(long, default_value = "report", value_name = "DIR")]
    pub out: PathBuf,
}

fn layer_data(cfg: &Config, m: &ArgMatches, section: &str, d: &mut DataArgs) -> CliResult<()> {
    layer!(cfg, m, section, d, [input, station, variables, aggregation, fill_gaps]);
    Ok(())
}

/// Flag, then config, then `GWTS_SEED`.
fn resolve_seed(cfg: &Config, m: &ArgMatches, section: &str, flag: Option<u64>) -> CliResult<Option<u64>> {
    if let Some(seed) = cfg.resolve(m, section, "seed", flag)? {
        return Ok(Some(seed));
    }
    match std::env::var("GWTS_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("GWTS_SEED must be a non-negative integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli, matches: &ArgMatches) -> CliResult<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let (name, m) = matches.subcommand().expect("subcommand is required");
    match cli.command {
        Command::Fit(mut a) => {
            layer_data(&cfg, m, name, &mut a.data)?;
            layer!(cfg, m, name, a, [lag, auto_lag, p_max, holdout, no_holdout, divisor, difference, out]);
            commands::fit(&a).map(drop)
        }
        Command::Diagnose(mut a) => {
            layer!(cfg, m, name, a, [model, alpha, portmanteau_lags, arch_lags, out]);
            commands::diagnose(&a).map(drop)
        }
        Command::Structural(mut a) => {
            layer!(cfg, m, name, a, [model, h, fevd_h, boot, ci, cause, order, alpha, allow_unstable, out]);
            a.seed = resolve_seed(&cfg, m, name, a.seed)?;
            commands::structural(&a).map(drop)
        }
        Command::Cdd(mut a) => {
            layer!(cfg, m, name, a, [input, aggregation, fill_gaps, variable, threshold, out]);
            commands::cdd(&a).map(drop)
        }
        Command::Shelflife(mut a) => {
            layer_data(&cfg, m, name, &mut a.data)?;
            layer!(cfg, m, name, a, [forecaster, lag, p_max, period, threshold, h_max, min_train, holdout, target, pooled, out]);
            commands::shelflife(&a).map(drop)
        }
        Command::Reproduce(mut a) => {
            layer!(cfg, m, name, a, [fixtures, boot, out]);
            a.seed = resolve_seed(&cfg, m, name, a.seed)?;
            reproduce::run(&a)
        }
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            // prints help/version to stdout and usage errors to stderr
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from the same definition");
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
