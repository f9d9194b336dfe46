//! The four subcommand implementations and their output files.

use std::path::Path;
use std::time::Instant;

use serde_json::json;

use pense::cv::{naive_cv, ris_cv, select_lambda, CvConfig, CvOutcome, SelectionRule};
use pense::cv::PenaltyFamily;
use pense::diagnostics::{linear_grid, scan_scenario, UnivariateScenario};
use pense::optimizer::OptimizeConfig;
use pense::rho::{calibrate_cutoff, RhoKind};
use pense::simulate::{generate, SimulationConfig};

use crate::errors::{CliError, CliResult};
use crate::io::{
    write_curve_csv, write_dataset_csv, write_fig_csv, write_json, write_path_csv, CurveRow,
    PathRow,
};
use crate::pipeline::{run_fit_pipeline, FittedPath};
use crate::settings::FitSettings;

const FORMAT_VERSION: u32 = 1;

fn fit_settings_json(settings: &FitSettings) -> serde_json::Value {
    json!({
        "loss": settings.loss_name(),
        "rho": settings.rho_kind.name(),
        "delta": settings.delta,
        "fixed_scale": if settings.loss_name() == "m" { Some(settings.fixed_scale) } else { None },
        "alpha": settings.alpha,
        "grid_size": settings.grid_size,
        "lambda_min_ratio": settings.lambda_min_ratio,
        "explicit_lambdas": settings.explicit_lambdas,
        "max_minima": settings.max_minima,
        "n_starts": settings.n_starts,
        "seed": settings.seed,
        "adaptive": settings.adaptive,
        "adaptive_exponent": settings.adaptive_exponent,
        "standardize": settings.standardize,
    })
}

fn path_json(fit: &FittedPath) -> serde_json::Value {
    json!({
        "n": fit.data.n(),
        "p": fit.data.p(),
        "columns": fit.column_names,
        "dropped_columns": fit.dropped_columns,
        "lambdas": fit.registry.lambdas,
        "minima_counts": fit.registry.minima.iter().map(|l| l.len()).collect::<Vec<_>>(),
        "standardization": {
            "applied": fit.standardized,
            "centers": fit.standardizer.centers.to_vec(),
            "scales": fit.standardizer.scales.to_vec(),
            "y_center": fit.standardizer.y_center,
        },
    })
}

fn registry_rows(fit: &FittedPath) -> (Vec<(f64, usize, f64, f64)>, Vec<(f64, ndarray::Array1<f64>)>) {
    let mut meta = Vec::new();
    let mut coefs = Vec::new();
    for (t, level) in fit.registry.minima.iter().enumerate() {
        for (q, m) in level.iter().enumerate() {
            meta.push((fit.registry.lambdas[t], q + 1, m.objective, m.scale));
            coefs.push(fit.original_coefficients(m.intercept, &m.beta));
        }
    }
    (meta, coefs)
}

pub fn cmd_fit(data_path: &Path, settings: &FitSettings, out_dir: &Path) -> CliResult<()> {
    let fit = run_fit_pipeline(data_path, settings)?;

    let (meta, coefs) = registry_rows(&fit);
    let rows: Vec<PathRow<'_>> = meta
        .iter()
        .zip(coefs.iter())
        .map(|(&(lambda, q, objective, scale), (intercept, beta))| PathRow {
            lambda,
            q,
            objective,
            scale,
            nnz: beta.iter().filter(|b| **b != 0.0).count(),
            l1_norm: beta.iter().map(|b| b.abs()).sum(),
            intercept: *intercept,
            beta,
        })
        .collect();
    write_path_csv(&out_dir.join("path.csv"), fit.data.p(), &rows)?;

    let doc = json!({
        "format_version": FORMAT_VERSION,
        "command": "fit",
        "config": fit_settings_json(settings),
        "result": path_json(&fit),
    });
    write_json(&out_dir.join("fit.json"), &doc)?;
    write_timings(out_dir, &[("fit", fit.fit_seconds)])?;
    Ok(())
}

pub struct CvCommandSettings {
    pub engine: String,
    pub metric: pense::cv::Metric,
    pub folds: usize,
    pub replications: usize,
    pub rule: SelectionRule,
    pub c_tau: f64,
}

pub fn cmd_cv(
    data_path: &Path,
    settings: &FitSettings,
    cv: &CvCommandSettings,
    out_dir: &Path,
) -> CliResult<()> {
    let fit = run_fit_pipeline(data_path, settings)?;
    let family = PenaltyFamily {
        alpha: settings.alpha,
        loadings: fit.loadings.clone(),
    };
    let cfg = CvConfig {
        folds: cv.folds,
        replications: cv.replications,
        seed: settings.seed,
        metric: cv.metric,
        n_subsets: settings.n_starts,
        dedup_tol: pense::optimizer::DEFAULT_DEDUP_TOL,
        optimize: OptimizeConfig::default(),
    };
    if cv.folds > fit.data.n() {
        return Err(CliError::input(format!(
            "{} folds for {} observations",
            cv.folds,
            fit.data.n()
        )));
    }

    let started = Instant::now();
    let outcome: CvOutcome = match cv.engine.as_str() {
        "ris" => ris_cv(&fit.registry, &fit.data, &fit.loss, &family, &cfg)?,
        "naive" => naive_cv(&fit.registry, &fit.data, &fit.loss, &family, &cfg)?,
        other => {
            return Err(CliError::input(format!(
                "unknown engine '{other}' (expected ris or naive)"
            )))
        }
    };
    let cv_seconds = started.elapsed().as_secs_f64();

    let selection = select_lambda(&outcome, cv.rule)?;
    let mut rows = Vec::new();
    for (t, &lambda) in outcome.lambdas.iter().enumerate() {
        for (q, cell) in outcome.cells[t].iter().enumerate() {
            rows.push(CurveRow {
                lambda,
                q: q + 1,
                e_hat: cell.e_hat,
                sd: cell.sd,
                selected: t == selection.lambda_index && q == selection.q,
            });
        }
    }
    write_curve_csv(&out_dir.join("curve.csv"), &rows)?;

    let chosen = &fit.registry.minima[selection.lambda_index][selection.q];
    let (intercept, beta) = fit.original_coefficients(chosen.intercept, &chosen.beta);
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "command": "cv",
        "engine": cv.engine,
        "metric": outcome.metric_label,
        "c_tau": cv.c_tau,
        "rule": match cv.rule { SelectionRule::Min => "min", SelectionRule::OneSe => "one-se" },
        "folds": cv.folds,
        "replications": cv.replications,
        "config": fit_settings_json(settings),
        "selection": {
            "lambda": selection.lambda,
            "lambda_index": selection.lambda_index,
            "q": selection.q + 1,
            "e_hat": selection.e_hat,
            "sd": selection.sd,
        },
        "coefficients": {
            "intercept": intercept,
            "beta": beta.to_vec(),
            "nnz": beta.iter().filter(|b| **b != 0.0).count(),
            "l1_norm": beta.iter().map(|b| b.abs()).sum::<f64>(),
            "scale": chosen.scale,
        },
        "result": path_json(&fit),
    });
    write_json(&out_dir.join("cv.json"), &doc)?;
    write_timings(out_dir, &[("fit", fit.fit_seconds), ("cv", cv_seconds)])?;
    Ok(())
}

pub fn cmd_simulate(config: &SimulationConfig, out_dir: &Path) -> CliResult<()> {
    config.validate().map_err(CliError::from)?;
    let started = Instant::now();
    let sim = generate(config)?;
    write_dataset_csv(&out_dir.join("dataset.csv"), &sim.data)?;
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "command": "simulate",
        "config": {
            "n": config.n,
            "p": config.p,
            "error_family": config.error_family.name(),
            "snr": config.snr,
            "leverage_fraction": config.leverage_fraction,
            "leverage_multiplier": config.leverage_multiplier,
            "contamination_fraction": config.contamination_fraction,
            "signal_values": config.signal_values,
            "contamination_snr": config.contamination_snr,
            "seed": config.rng_seed,
        },
        "beta_true": sim.beta_true.to_vec(),
        "sparsity": config.sparsity(),
        "contaminated_blocks": sim.contaminated_blocks,
        "leverage_rows": sim.leverage_rows,
        "contamination_columns": sim.contamination_columns,
        "contamination_column_sets": sim.contamination_column_sets,
        "true_error_scale": sim.true_error_scale,
    });
    write_json(&out_dir.join("truth.json"), &doc)?;
    write_timings(out_dir, &[("simulate", started.elapsed().as_secs_f64())])?;
    Ok(())
}

pub struct PathdemoSettings {
    pub sigma_c: f64,
    pub sigma_star: f64,
    pub beta_c: f64,
    pub beta_star: f64,
    pub b: f64,
    pub n: usize,
    pub rho: String,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub grid_size: usize,
    pub seed: u64,
}

pub fn cmd_pathdemo(settings: &PathdemoSettings, out_dir: &Path) -> CliResult<()> {
    let rho_kind = match settings.rho.as_str() {
        "bisquare" => RhoKind::Bisquare,
        "lqq" => RhoKind::Lqq,
        other => {
            return Err(CliError::input(format!(
                "unknown rho family '{other}' for the demo (expected bisquare or lqq)"
            )))
        }
    };
    if settings.lambda_max <= settings.lambda_min || settings.lambda_min <= 0.0 {
        return Err(CliError::input("need lambda_max > lambda_min > 0"));
    }
    let scenario = UnivariateScenario {
        sigma_c: settings.sigma_c,
        sigma_star: settings.sigma_star,
        beta_c: settings.beta_c,
        beta_star: settings.beta_star,
        b: settings.b,
        n: settings.n,
        rho: calibrate_cutoff(rho_kind, 0.5)?,
        lambda_grid: linear_grid(settings.lambda_max, settings.lambda_min, settings.grid_size),
    };
    let started = Instant::now();
    let data = scenario.generate(settings.seed)?;
    let report = scan_scenario(&scenario, &data)?;

    let rows: Vec<(f64, f64, bool)> = report
        .points
        .iter()
        .map(|p| (p.lambda, p.location, p.is_global))
        .collect();
    write_fig_csv(&out_dir.join("fig_s1.csv"), &rows)?;

    let doc = json!({
        "format_version": FORMAT_VERSION,
        "command": "pathdemo",
        "scenario": {
            "sigma_c": settings.sigma_c,
            "sigma_star": settings.sigma_star,
            "beta_c": settings.beta_c,
            "beta_star": settings.beta_star,
            "b": settings.b,
            "n": settings.n,
            "rho": settings.rho,
            "lambda_max": settings.lambda_max,
            "lambda_min": settings.lambda_min,
            "grid_size": settings.grid_size,
            "seed": settings.seed,
        },
        "discontinuities": report
            .discontinuities
            .iter()
            .map(|(lambda, jump)| json!({"lambda": lambda, "jump": jump}))
            .collect::<Vec<_>>(),
        "discontinuity_count": report.discontinuities.len(),
    });
    write_json(&out_dir.join("report.json"), &doc)?;
    write_timings(out_dir, &[("pathdemo", started.elapsed().as_secs_f64())])?;
    Ok(())
}

/// Wall-clock sidecar. The only output that is not a deterministic function of
/// the inputs, which is why it lives apart from the result files.
fn write_timings(out_dir: &Path, stages: &[(&str, f64)]) -> CliResult<()> {
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "stages": stages
            .iter()
            .map(|(name, seconds)| json!({"name": name, "seconds": seconds}))
            .collect::<Vec<_>>(),
    });
    write_json(&out_dir.join("timings.json"), &doc)
}
