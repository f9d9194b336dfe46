//! `pense` — elastic-net penalized robust regression from the command line.
//!
//! Subcommands: `fit` (penalization path with multi-minimum tracking), `cv`
//! (hyper-parameter selection by the naive or information-sharing engine),
//! `simulate` (contaminated benchmark data) and `pathdemo` (univariate
//! non-smooth-path demonstration). Exit codes: 0 success, 2 input error,
//! 3 numerical failure.

mod commands;
mod errors;
mod io;
mod pipeline;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CvCommandSettings, PathdemoSettings};
use errors::{CliError, CliResult};
use pense::cv::DEFAULT_C_TAU;
use pense::simulate::{ErrorFamily, SimulationConfig};
use settings::{
    parse_lambda_list, parse_loss_kind, parse_metric, parse_rho_kind, parse_rule, resolve,
    FileConfig, FitSettings, LossKind,
};

#[derive(Parser)]
#[command(name = "pense", version, about = "Robust penalized regression with information-sharing cross-validation")]
struct Cli {
    /// Optional key=value configuration file; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores). Results are identical for any
    /// thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct FitFlags {
    /// Input dataset (CSV: header, `y` first, then predictors).
    #[arg(long)]
    data: PathBuf,

    /// Loss: `s` (regression scale) or `m` (fixed scale).
    #[arg(long)]
    loss: Option<String>,

    /// Rho family: bisquare, lqq or hampel.
    #[arg(long)]
    rho: Option<String>,

    /// Breakdown point in (0, 0.5].
    #[arg(long)]
    delta: Option<f64>,

    /// Residual scale for the m-loss.
    #[arg(long)]
    fixed_scale: Option<f64>,

    /// Elastic-net mixing in [0, 1]; 1 is pure L1.
    #[arg(long)]
    alpha: Option<f64>,

    /// Number of grid points.
    #[arg(long)]
    grid_size: Option<usize>,

    /// Smallest lambda as a fraction of lambda_max.
    #[arg(long)]
    lambda_min_ratio: Option<f64>,

    /// Explicit descending lambda list, comma separated (overrides the grid).
    #[arg(long)]
    lambdas: Option<String>,

    /// Maximum minima retained per lambda.
    #[arg(long)]
    max_minima: Option<usize>,

    /// Random elemental starts for the search.
    #[arg(long)]
    n_starts: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Adaptive penalty loadings from a pilot fit.
    #[arg(long)]
    adaptive: bool,

    #[arg(long)]
    adaptive_exponent: Option<f64>,

    /// Skip the median/MAD standardization.
    #[arg(long)]
    no_standardize: bool,
}

impl FitFlags {
    fn resolve(&self, file: &FileConfig) -> CliResult<FitSettings> {
        let loss_kind = match &self.loss {
            Some(s) => parse_loss_kind(s)?,
            None => match file.get_string("loss") {
                Some(s) => parse_loss_kind(&s)?,
                None => LossKind::S,
            },
        };
        let rho_kind = match &self.rho {
            Some(s) => parse_rho_kind(s)?,
            None => match file.get_string("rho") {
                Some(s) => parse_rho_kind(&s)?,
                None => pense::rho::RhoKind::Bisquare,
            },
        };
        let explicit_lambdas = match &self.lambdas {
            Some(raw) => Some(parse_lambda_list(raw)?),
            None => match file.get_string("lambdas") {
                Some(raw) => Some(parse_lambda_list(&raw)?),
                None => None,
            },
        };
        let settings = FitSettings {
            loss_kind,
            rho_kind,
            delta: resolve(self.delta, file.get("delta")?, 0.25),
            fixed_scale: resolve(self.fixed_scale, file.get("fixed_scale")?, 1.0),
            alpha: resolve(self.alpha, file.get("alpha")?, 0.5),
            grid_size: resolve(self.grid_size, file.get("grid_size")?, 50),
            lambda_min_ratio: resolve(self.lambda_min_ratio, file.get("lambda_min_ratio")?, 1e-3),
            explicit_lambdas,
            max_minima: resolve(self.max_minima, file.get("max_minima")?, 40),
            n_starts: resolve(self.n_starts, file.get("n_starts")?, 50),
            seed: resolve(self.seed, file.get("seed")?, 1),
            adaptive: self.adaptive || file.get("adaptive")?.unwrap_or(false),
            adaptive_exponent: resolve(
                self.adaptive_exponent,
                file.get("adaptive_exponent")?,
                1.0,
            ),
            standardize: !(self.no_standardize || file.get("no_standardize")?.unwrap_or(false)),
        };
        settings.validate()?;
        Ok(settings)
    }
}

#[derive(Args)]
struct CvFlags {
    #[command(flatten)]
    fit: FitFlags,

    /// Selection engine: `ris` (information sharing) or `naive`.
    #[arg(long)]
    engine: Option<String>,

    /// Naive-engine metric: rmspe, mape or tau.
    #[arg(long)]
    metric: Option<String>,

    #[arg(long)]
    c_tau: Option<f64>,

    #[arg(long)]
    folds: Option<usize>,

    #[arg(long)]
    replications: Option<usize>,

    /// Selection rule: `min` or `one-se`.
    #[arg(long)]
    rule: Option<String>,
}

#[derive(Args)]
struct SimulateFlags {
    #[arg(long)]
    n: Option<usize>,

    #[arg(long)]
    p: Option<usize>,

    /// Error family: gaussian, laplace or stable.
    #[arg(long)]
    errors: Option<String>,

    #[arg(long)]
    snr: Option<f64>,

    #[arg(long)]
    leverage_fraction: Option<f64>,

    #[arg(long)]
    leverage_multiplier: Option<f64>,

    #[arg(long)]
    contamination_fraction: Option<f64>,

    /// Three contamination signal values, comma separated.
    #[arg(long)]
    signals: Option<String>,

    #[arg(long)]
    contamination_snr: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PathdemoFlags {
    #[arg(long)]
    sigma_c: Option<f64>,

    #[arg(long)]
    sigma_star: Option<f64>,

    #[arg(long)]
    beta_c: Option<f64>,

    #[arg(long)]
    beta_star: Option<f64>,

    /// Fraction of observations in the near population (0 disables it).
    #[arg(long)]
    b: Option<f64>,

    #[arg(long)]
    n: Option<usize>,

    /// Rho family for the demo: bisquare or lqq.
    #[arg(long)]
    rho: Option<String>,

    #[arg(long)]
    lambda_max: Option<f64>,

    #[arg(long)]
    lambda_min: Option<f64>,

    #[arg(long)]
    grid_size: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the multi-minimum penalization path.
    Fit(FitFlags),
    /// Select the penalty level by cross-validation.
    Cv(CvFlags),
    /// Generate a contaminated benchmark dataset.
    Simulate(SimulateFlags),
    /// Reproduce the univariate non-smooth-path demonstration.
    Pathdemo(PathdemoFlags),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pense: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    }
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::empty(),
    };
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", cli.out_dir.display())))?;

    match &cli.command {
        Command::Fit(flags) => {
            let settings = flags.resolve(&file)?;
            commands::cmd_fit(&flags.data, &settings, &cli.out_dir)
        }
        Command::Cv(flags) => {
            let settings = flags.fit.resolve(&file)?;
            let c_tau = resolve(flags.c_tau, file.get("c_tau")?, DEFAULT_C_TAU);
            if !(c_tau > 0.0) {
                return Err(CliError::input("c_tau must be positive"));
            }
            let metric_name = flags
                .metric
                .clone()
                .or_else(|| file.get_string("metric"))
                .unwrap_or_else(|| "tau".to_string());
            let rule_name = flags
                .rule
                .clone()
                .or_else(|| file.get_string("rule"))
                .unwrap_or_else(|| "min".to_string());
            let cv = CvCommandSettings {
                engine: flags
                    .engine
                    .clone()
                    .or_else(|| file.get_string("engine"))
                    .unwrap_or_else(|| "ris".to_string()),
                metric: parse_metric(&metric_name, c_tau)?,
                folds: resolve(flags.folds, file.get("folds")?, 7),
                replications: resolve(flags.replications, file.get("replications")?, 5),
                rule: parse_rule(&rule_name)?,
                c_tau,
            };
            if cv.folds < 2 {
                return Err(CliError::input("need at least 2 folds"));
            }
            if cv.replications == 0 {
                return Err(CliError::input("need at least 1 replication"));
            }
            commands::cmd_cv(&flags.fit.data, &settings, &cv, &cli.out_dir)
        }
        Command::Simulate(flags) => {
            let family = match flags
                .errors
                .clone()
                .or_else(|| file.get_string("errors"))
                .unwrap_or_else(|| "gaussian".to_string())
                .as_str()
            {
                "gaussian" => ErrorFamily::Gaussian,
                "laplace" => ErrorFamily::Laplace,
                "stable" | "stable_1_5" => ErrorFamily::Stable15,
                other => {
                    return Err(CliError::input(format!(
                        "unknown error family '{other}' (expected gaussian, laplace or stable)"
                    )))
                }
            };
            let signals = match flags.signals.clone().or_else(|| file.get_string("signals")) {
                Some(raw) => {
                    let v = parse_lambda_list(&raw)?;
                    if v.len() != 3 {
                        return Err(CliError::input("--signals needs exactly three values"));
                    }
                    [v[0], v[1], v[2]]
                }
                None => [-1.5, -1.0, -0.5],
            };
            let config = SimulationConfig {
                n: resolve(flags.n, file.get("n")?, 100),
                p: resolve(flags.p, file.get("p")?, 50),
                error_family: family,
                snr: resolve(flags.snr, file.get("snr")?, 1.0),
                leverage_fraction: resolve(
                    flags.leverage_fraction,
                    file.get("leverage_fraction")?,
                    0.2,
                ),
                leverage_multiplier: resolve(
                    flags.leverage_multiplier,
                    file.get("leverage_multiplier")?,
                    8.0,
                ),
                contamination_fraction: resolve(
                    flags.contamination_fraction,
                    file.get("contamination_fraction")?,
                    0.3,
                ),
                signal_values: signals,
                contamination_snr: resolve(
                    flags.contamination_snr,
                    file.get("contamination_snr")?,
                    10.0,
                ),
                rng_seed: resolve(flags.seed, file.get("seed")?, 1),
            };
            commands::cmd_simulate(&config, &cli.out_dir)
        }
        Command::Pathdemo(flags) => {
            let settings = PathdemoSettings {
                sigma_c: resolve(flags.sigma_c, file.get("sigma_c")?, 0.01),
                sigma_star: resolve(flags.sigma_star, file.get("sigma_star")?, 0.1),
                beta_c: resolve(flags.beta_c, file.get("beta_c")?, 0.5),
                beta_star: resolve(flags.beta_star, file.get("beta_star")?, 100.0),
                b: resolve(flags.b, file.get("b")?, 0.3),
                n: resolve(flags.n, file.get("n")?, 100),
                rho: flags
                    .rho
                    .clone()
                    .or_else(|| file.get_string("rho"))
                    .unwrap_or_else(|| "bisquare".to_string()),
                lambda_max: resolve(flags.lambda_max, file.get("lambda_max")?, 0.02),
                lambda_min: resolve(flags.lambda_min, file.get("lambda_min")?, 1e-4),
                grid_size: resolve(flags.grid_size, file.get("grid_size")?, 50),
                seed: resolve(flags.seed, file.get("seed")?, 1),
            };
            commands::cmd_pathdemo(&settings, &cli.out_dir)
        }
    }
}
