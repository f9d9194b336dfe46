//! Flag and config-file resolution.
//!
//! Every option can come from a `key=value` config file (`--config`), with
//! command-line flags taking precedence. All constraints of the downstream
//! numerics are re-validated here with actionable messages.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use pense::cv::{Metric, SelectionRule};
use pense::mscale::MScaleSpec;
use pense::optimizer::LossSpec;
use pense::rho::{calibrate_cutoff, RhoFunction, RhoKind};

use crate::errors::{CliError, CliResult};

/// Parsed `key=value` file; `#` starts a comment.
pub struct FileConfig(HashMap<String, String>);

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig(HashMap::new())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = HashMap::new();
        for (no, line) in raw.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::input(format!(
                    "config line {}: expected key=value, got '{line}'",
                    no + 1
                )));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig(map))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::input(format!("config key '{key}': cannot parse '{raw}'"))
            }),
        }
    }

    pub fn get_string(&self, key: &str) -> Option<String> {
        self.0.get(key).cloned()
    }
}

/// Picks flag over file over default.
pub fn resolve<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    S,
    M,
}

pub fn parse_loss_kind(s: &str) -> CliResult<LossKind> {
    match s {
        "s" | "s-loss" => Ok(LossKind::S),
        "m" | "m-loss" => Ok(LossKind::M),
        other => Err(CliError::input(format!(
            "unknown loss '{other}' (expected 's' or 'm')"
        ))),
    }
}

pub fn parse_rho_kind(s: &str) -> CliResult<RhoKind> {
    match s {
        "bisquare" => Ok(RhoKind::Bisquare),
        "lqq" => Ok(RhoKind::Lqq),
        "hampel" => Ok(RhoKind::Hampel),
        other => Err(CliError::input(format!(
            "unknown rho family '{other}' (expected bisquare, lqq or hampel)"
        ))),
    }
}

pub fn parse_metric(s: &str, c_tau: f64) -> CliResult<Metric> {
    match s {
        "rmspe" => Ok(Metric::Rmspe),
        "mape" => Ok(Metric::Mape),
        "tau" => Ok(Metric::Tau { c_tau }),
        other => Err(CliError::input(format!(
            "unknown metric '{other}' (expected rmspe, mape or tau)"
        ))),
    }
}

pub fn parse_rule(s: &str) -> CliResult<SelectionRule> {
    match s {
        "min" => Ok(SelectionRule::Min),
        "one-se" | "1se" => Ok(SelectionRule::OneSe),
        other => Err(CliError::input(format!(
            "unknown selection rule '{other}' (expected min or one-se)"
        ))),
    }
}

/// Fully resolved fitting configuration shared by `fit` and `cv`.
#[derive(Debug, Clone)]
pub struct FitSettings {
    pub loss_kind: LossKind,
    pub rho_kind: RhoKind,
    pub delta: f64,
    pub fixed_scale: f64,
    pub alpha: f64,
    pub grid_size: usize,
    pub lambda_min_ratio: f64,
    pub explicit_lambdas: Option<Vec<f64>>,
    pub max_minima: usize,
    pub n_starts: usize,
    pub seed: u64,
    pub adaptive: bool,
    pub adaptive_exponent: f64,
    pub standardize: bool,
}

impl FitSettings {
    pub fn validate(&self) -> CliResult<()> {
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(CliError::input(format!(
                "delta must lie in (0, 0.5], got {}",
                self.delta
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CliError::input(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.alpha == 0.0 && self.explicit_lambdas.is_none() {
            return Err(CliError::input(
                "alpha = 0 has no finite lambda_max; pass an explicit --lambdas list",
            ));
        }
        if self.loss_kind == LossKind::M && !(self.fixed_scale > 0.0) {
            return Err(CliError::input(
                "the m-loss needs a positive --fixed-scale",
            ));
        }
        if self.grid_size < 2 && self.explicit_lambdas.is_none() {
            return Err(CliError::input("grid size must be at least 2"));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(CliError::input(format!(
                "lambda min ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        if let Some(grid) = &self.explicit_lambdas {
            if grid.is_empty() || grid.windows(2).any(|w| w[0] <= w[1]) {
                return Err(CliError::input(
                    "explicit lambda list must be strictly descending",
                ));
            }
        }
        if self.max_minima == 0 {
            return Err(CliError::input("must retain at least one minimum"));
        }
        if !(self.adaptive_exponent > 0.0) {
            return Err(CliError::input("adaptive exponent must be positive"));
        }
        Ok(())
    }

    pub fn rho(&self) -> CliResult<RhoFunction> {
        calibrate_cutoff(self.rho_kind, self.delta).map_err(CliError::from)
    }

    pub fn loss(&self) -> CliResult<LossSpec> {
        let rho = self.rho()?;
        Ok(match self.loss_kind {
            LossKind::S => LossSpec::s_loss(rho, MScaleSpec::new(self.delta)),
            LossKind::M => LossSpec::m_loss(rho, self.fixed_scale),
        })
    }

    pub fn loss_name(&self) -> &'static str {
        match self.loss_kind {
            LossKind::S => "s",
            LossKind::M => "m",
        }
    }
}

pub fn parse_lambda_list(raw: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("cannot parse lambda '{tok}'")))
        })
        .collect()
}
