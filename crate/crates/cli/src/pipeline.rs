//! The shared fitting pipeline behind `fit` and `cv`: ingestion, constant
//! column removal, robust standardization, lambda grid and the minima
//! registry (with the optional adaptive-loading pilot round).

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use pense::dataset::{Dataset, RobustStandardization};
use pense::optimizer::{
    adaptive_loadings, compute_path, generate_starts, robust_lambda_grid, LossSpec,
    MinimaRegistry, OptimizeConfig,
};

use crate::errors::{CliError, CliResult};
use crate::io::read_dataset;
use crate::settings::FitSettings;

pub struct FittedPath {
    /// Data in fitting (standardized) units.
    pub data: Dataset,
    pub standardizer: RobustStandardization,
    pub standardized: bool,
    pub registry: MinimaRegistry,
    pub loss: LossSpec,
    pub loadings: Option<Array1<f64>>,
    pub column_names: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub fit_seconds: f64,
}

/// Maps a registry entry back to original units.
impl FittedPath {
    pub fn original_coefficients(&self, intercept: f64, beta: &Array1<f64>) -> (f64, Array1<f64>) {
        if self.standardized {
            self.standardizer.back_coefficients(intercept, beta)
        } else {
            (intercept, beta.clone())
        }
    }
}

pub fn run_fit_pipeline(data_path: &Path, settings: &FitSettings) -> CliResult<FittedPath> {
    settings.validate()?;
    let loaded = read_dataset(data_path)?;

    // Constant columns carry no information and break standardization.
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..loaded.data.p() {
        let col = loaded.data.x.column(j);
        let constant = col.iter().all(|v| *v == col[0]);
        if constant {
            log::warn!("dropping constant column '{}'", loaded.column_names[j]);
            dropped.push(loaded.column_names[j].clone());
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(CliError::input("every predictor column is constant"));
    }
    let raw = if dropped.is_empty() {
        loaded.data
    } else {
        let mut x = Array2::zeros((loaded.data.n(), keep.len()));
        for (out, &j) in keep.iter().enumerate() {
            x.column_mut(out).assign(&loaded.data.x.column(j));
        }
        Dataset::new(x, loaded.data.y.clone()).map_err(|e| CliError::input(e.to_string()))?
    };
    let column_names: Vec<String> = keep
        .iter()
        .map(|&j| loaded.column_names[j].clone())
        .collect();

    let standardizer = RobustStandardization::fit(&raw);
    let data = if settings.standardize {
        standardizer.transform(&raw)
    } else {
        raw
    };

    let loss = settings.loss()?;
    let optimize = OptimizeConfig::default();
    let started = Instant::now();

    // Optional adaptive round: pilot with unit loadings, then reweight the
    // penalty by the pilot's coefficient sizes.
    let loadings = if settings.adaptive {
        let pilot_grid = grid_for(&data, &loss, settings, None)?;
        let pilot_starts = generate_starts(
            &data,
            &pense::enet::PenaltySpec::new(pilot_grid[0], settings.alpha),
            settings.n_starts,
            settings.seed,
            &optimize,
        );
        let pilot = compute_path(
            &data,
            &loss,
            settings.alpha,
            None,
            &pilot_grid,
            settings.max_minima,
            &pilot_starts,
            pense::optimizer::DEFAULT_DEDUP_TOL,
            &optimize,
        )
        .map_err(CliError::from)?;
        let last = pilot
            .minima
            .last()
            .and_then(|level| level.first())
            .ok_or_else(|| CliError::Numerical("pilot fit produced no minima".into()))?;
        Some(adaptive_loadings(last, settings.adaptive_exponent))
    } else {
        None
    };

    let grid = grid_for(&data, &loss, settings, loadings.as_ref())?;
    let starts = generate_starts(
        &data,
        &pense::enet::PenaltySpec {
            lambda: grid[0],
            alpha: settings.alpha,
            loadings: loadings.clone(),
        },
        settings.n_starts,
        settings.seed,
        &optimize,
    );
    let registry = compute_path(
        &data,
        &loss,
        settings.alpha,
        loadings.as_ref(),
        &grid,
        settings.max_minima,
        &starts,
        pense::optimizer::DEFAULT_DEDUP_TOL,
        &optimize,
    )
    .map_err(CliError::from)?;
    let fit_seconds = started.elapsed().as_secs_f64();

    Ok(FittedPath {
        data,
        standardizer,
        standardized: settings.standardize,
        registry,
        loss,
        loadings,
        column_names,
        dropped_columns: dropped,
        fit_seconds,
    })
}

fn grid_for(
    data: &Dataset,
    loss: &LossSpec,
    settings: &FitSettings,
    loadings: Option<&Array1<f64>>,
) -> CliResult<Vec<f64>> {
    match &settings.explicit_lambdas {
        Some(grid) => Ok(grid.clone()),
        None => robust_lambda_grid(
            data,
            loss,
            settings.alpha,
            loadings,
            settings.grid_size,
            settings.lambda_min_ratio,
        )
        .map_err(CliError::from),
    }
}
