//! Local optimization of the penalized robust objective and the per-lambda
//! minima registry.
//!
//! The objective is `loss(y - b0 - X beta) + lambda * P(beta)` where the loss
//! is either the M-loss `(1/2n) sum rho(r_i / s)` with a fixed scale `s`, or
//! the S-loss `sigma_M(r)^2 / 2` with `sigma_M` the M-scale of the residuals.
//! Both are non-convex for bounded rho, so the objective is descended by
//! iteratively reweighted least squares: each outer step freezes the
//! robustness weights and solves the weighted elastic net, with step-halving
//! toward the previous iterate whenever the exact objective would increase.
//!
//! Multiple local minima per penalty level are retained in a
//! [`MinimaRegistry`]: deduplicated, ordered by objective value, capped at a
//! configurable count, and carried forward as warm starts along the grid so
//! that each basin traces a smooth path.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::enet::{lambda_max, weighted_en_solve, PenaltySpec, WlsProblem};
use crate::error::{Error, Result};
use crate::mscale::{m_scale_from, robustness_weights, MScaleSpec, WeightVector};
use crate::rho::RhoFunction;
use crate::seeding;

/// Loss side of the objective.
#[derive(Debug, Clone)]
pub enum LossSpec {
    /// S-loss: half the squared M-scale of the residuals.
    S { rho: RhoFunction, mscale: MScaleSpec },
    /// M-loss: average rho of residuals standardized by a pre-determined scale.
    M { rho: RhoFunction, scale: f64 },
}

impl LossSpec {
    pub fn s_loss(rho: RhoFunction, mscale: MScaleSpec) -> Self {
        LossSpec::S { rho, mscale }
    }

    pub fn m_loss(rho: RhoFunction, scale: f64) -> Self {
        LossSpec::M { rho, scale }
    }

    pub fn rho(&self) -> &RhoFunction {
        match self {
            LossSpec::S { rho, .. } | LossSpec::M { rho, .. } => rho,
        }
    }

    pub fn breakdown(&self) -> Option<f64> {
        match self {
            LossSpec::S { mscale, .. } => Some(mscale.delta),
            LossSpec::M { .. } => None,
        }
    }

    /// Loss value and the residual scale at these residuals. For the S-loss
    /// the scale solve can be warm-started with `scale_hint`.
    pub fn evaluate(&self, residuals: &[f64], scale_hint: Option<f64>) -> Result<(f64, f64)> {
        match self {
            LossSpec::S { rho, mscale } => {
                let sigma = m_scale_from(residuals, rho, mscale, scale_hint)?;
                Ok((0.5 * sigma * sigma, sigma))
            }
            LossSpec::M { rho, scale } => {
                let n = residuals.len() as f64;
                let value =
                    residuals.iter().map(|r| rho.rho(r / scale)).sum::<f64>() / (2.0 * n);
                Ok((value, *scale))
            }
        }
    }

    /// Robustness weights of a coefficient vector on the given residuals.
    pub fn weights(&self, residuals: &[f64], scale: f64) -> WeightVector {
        if scale > 0.0 {
            robustness_weights(residuals, self.rho(), scale)
        } else {
            // Perfect fit: the weight function's limit at zero, normalized.
            WeightVector {
                weights: Array1::ones(residuals.len()),
                source_scale: 0.0,
            }
        }
    }

    /// Factor rescaling the grid penalty for the weighted inner solve so that
    /// a fixed point of the IRWLS map is an exact stationary point of the
    /// penalized objective. The weighted least-squares surrogate's gradient is
    /// `-(1/sum W) sum W r x`, while the exact loss gradient is
    /// `-(1/sum psi(u) u) sum W r x / sigma^2`-shaped; matching the two pins
    /// the inner penalty to `lambda * scale`. Equals 1 exactly in the square
    /// configuration.
    pub fn inner_lambda_scale(&self, residuals: &[f64], scale: f64) -> f64 {
        if !(scale > 0.0) {
            return 1.0;
        }
        let rho = self.rho();
        let mut sum_w = 0.0;
        let mut sum_score = 0.0;
        for r in residuals {
            let u = r / scale;
            sum_w += rho.weight(u);
            sum_score += rho.psi(u) * u;
        }
        if !(sum_w > 0.0) {
            return 1.0;
        }
        let factor = match self {
            // sigma' directions: sum psi~ u / sum W~ (rho_sup cancels).
            LossSpec::S { .. } => sum_score / sum_w,
            // (1/2n) sum rho(r/s): gradient carries 1/(2 n s^2).
            LossSpec::M { scale: s, .. } => {
                2.0 * residuals.len() as f64 * s * s / sum_w
            }
        };
        if factor.is_finite() && factor > 0.0 {
            factor
        } else {
            1.0
        }
    }
}

/// Where a start vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartOrigin {
    Cold,
    SubsetStart,
    WarmFromLambda,
    WarmFromFullFit,
}

impl StartOrigin {
    pub fn name(self) -> &'static str {
        match self {
            StartOrigin::Cold => "cold",
            StartOrigin::SubsetStart => "subset-start",
            StartOrigin::WarmFromLambda => "warm-from-lambda",
            StartOrigin::WarmFromFullFit => "warm-from-full-fit",
        }
    }
}

/// A candidate starting point for the non-convex optimization.
#[derive(Debug, Clone)]
pub struct Start {
    pub intercept: f64,
    pub beta: Array1<f64>,
    pub origin: StartOrigin,
}

impl Start {
    pub fn cold(p: usize) -> Self {
        Start {
            intercept: 0.0,
            beta: Array1::zeros(p),
            origin: StartOrigin::Cold,
        }
    }
}

/// One stationary point of the penalized objective.
#[derive(Debug, Clone)]
pub struct LocalMinimum {
    pub intercept: f64,
    pub beta: Array1<f64>,
    /// Exact objective value: loss + lambda * penalty.
    pub objective: f64,
    /// sigma_M of the residuals for the S-loss; the fixed s for the M-loss.
    pub scale: f64,
    pub weights: WeightVector,
    pub lambda: f64,
    pub origin: StartOrigin,
    pub converged: bool,
}

impl LocalMinimum {
    pub fn nonzero_count(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }
}

/// Tolerances of the IRWLS outer loop and its inner solver.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeConfig {
    pub outer_tol: f64,
    /// Largest per-step coefficient movement still counted as converged.
    /// Must sit well below the registry dedup tolerance, otherwise slow
    /// within-basin creep leaves multiple stall points that masquerade as
    /// distinct minima.
    pub move_tol: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub max_inner_passes: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            outer_tol: 1e-9,
            move_tol: 1e-5,
            max_outer: 500,
            inner_tol: 1e-8,
            max_inner_passes: 1_000,
        }
    }
}

/// Relative coefficient distance used for registry deduplication.
fn relative_distance(kept: &Array1<f64>, cand: &Array1<f64>) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (a, b) in kept.iter().zip(cand.iter()) {
        diff += (a - b) * (a - b);
        norm += a * a;
    }
    diff.sqrt() / (1.0 + norm.sqrt())
}

/// IRWLS descent of the penalized objective from one starting point.
pub fn local_optimize(
    data: &Dataset,
    loss: &LossSpec,
    penalty: &PenaltySpec,
    start: &Start,
    cfg: &OptimizeConfig,
) -> Result<LocalMinimum> {
    if start.beta.len() != data.p() {
        return Err(Error::invalid(format!(
            "start has dimension {} but the design has {} columns",
            start.beta.len(),
            data.p()
        )));
    }
    penalty.validate(data.p())?;

    let mut intercept = start.intercept;
    let mut beta = start.beta.clone();
    let mut resid = data.residuals(intercept, &beta);
    let (mut loss_value, mut scale) = loss.evaluate(resid.as_slice().unwrap(), None)?;
    let mut objective = loss_value + penalty.value(&beta);
    let mut converged = false;

    for _outer in 0..cfg.max_outer {
        let weights = loss.weights(resid.as_slice().unwrap(), scale);
        let problem = WlsProblem {
            design: data.x.view(),
            response: data.y.view(),
            obs_weights: weights.weights.view(),
            fit_intercept: true,
        };
        let inner_penalty = PenaltySpec {
            lambda: penalty.lambda * loss.inner_lambda_scale(resid.as_slice().unwrap(), scale),
            alpha: penalty.alpha,
            loadings: penalty.loadings.clone(),
        };
        let inner = weighted_en_solve(
            &problem,
            &inner_penalty,
            Some((intercept, &beta)),
            cfg.inner_tol,
            cfg.max_inner_passes,
        )?;

        // Exact-objective line search along the segment to the inner solution.
        let mut accepted = None;
        let mut step = 1.0_f64;
        for _ in 0..30 {
            let cand_b0 = intercept + step * (inner.intercept - intercept);
            let cand_beta = &beta + &((&inner.beta - &beta) * step);
            let cand_resid = data.residuals(cand_b0, &cand_beta);
            match loss.evaluate(cand_resid.as_slice().unwrap(), Some(scale)) {
                Ok((cand_loss, cand_scale)) => {
                    let cand_obj = cand_loss + penalty.value(&cand_beta);
                    if cand_obj < objective {
                        accepted = Some((cand_b0, cand_beta, cand_resid, cand_loss, cand_scale, cand_obj));
                        break;
                    }
                }
                Err(Error::NonConvergence { .. }) | Err(Error::DegenerateResiduals { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }

        let Some((b0, b, r, lv, sc, obj)) = accepted else {
            // No descent along the IRWLS direction: we are at a fixed point.
            converged = true;
            break;
        };
        let decrease = objective - obj;
        let movement = (b0 - intercept)
            .abs()
            .max(
                b.iter()
                    .zip(beta.iter())
                    .map(|(new, old)| (new - old).abs())
                    .fold(0.0, f64::max),
            );
        let magnitude = 1.0 + b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        intercept = b0;
        beta = b;
        resid = r;
        loss_value = lv;
        scale = sc;
        objective = obj;
        if decrease < cfg.outer_tol * (1.0 + objective.abs())
            && movement < cfg.move_tol * magnitude
        {
            converged = true;
            break;
        }
    }

    let _ = loss_value;
    let weights = loss.weights(resid.as_slice().unwrap(), scale);
    Ok(LocalMinimum {
        intercept,
        beta,
        objective,
        scale,
        weights,
        lambda: penalty.lambda,
        origin: start.origin,
        converged,
    })
}

/// Optimizes every start at one penalty level, drops failures, deduplicates
/// and keeps the `max_minima` best by objective value.
pub fn optimize_at_lambda(
    data: &Dataset,
    loss: &LossSpec,
    penalty: &PenaltySpec,
    starts: &[Start],
    max_minima: usize,
    dedup_tol: f64,
    cfg: &OptimizeConfig,
) -> Vec<LocalMinimum> {
    let results: Vec<Result<LocalMinimum>> = starts
        .par_iter()
        .map(|s| local_optimize(data, loss, penalty, s, cfg))
        .collect();
    let mut candidates = Vec::with_capacity(results.len());
    for res in results {
        match res {
            Ok(m) if m.objective.is_finite() => candidates.push(m),
            Ok(m) => log::debug!("dropping non-finite minimum at lambda={}", m.lambda),
            Err(e) => log::debug!("dropping failed start at lambda={}: {e}", penalty.lambda),
        }
    }
    dedup_and_rank(candidates, max_minima, dedup_tol)
}

/// Sorts by objective and greedily removes near-duplicates, keeping the lower
/// objective of each pair.
pub fn dedup_and_rank(
    mut candidates: Vec<LocalMinimum>,
    max_minima: usize,
    dedup_tol: f64,
) -> Vec<LocalMinimum> {
    candidates.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    let mut kept: Vec<LocalMinimum> = Vec::new();
    for cand in candidates {
        if kept.len() >= max_minima {
            break;
        }
        let duplicate = kept
            .iter()
            .any(|k| relative_distance(&k.beta, &cand.beta) <= dedup_tol);
        if !duplicate {
            kept.push(cand);
        }
    }
    kept
}

/// Ordered, deduplicated local minima for every penalty level of a descending
/// grid.
#[derive(Debug, Clone)]
pub struct MinimaRegistry {
    pub lambdas: Vec<f64>,
    /// `minima[t]` are the retained minima at `lambdas[t]`, ascending by
    /// objective value.
    pub minima: Vec<Vec<LocalMinimum>>,
    pub max_minima: usize,
    pub dedup_tol: f64,
}

impl MinimaRegistry {
    /// The presumptive global minimum at grid position `t`.
    pub fn best(&self, t: usize) -> Option<&LocalMinimum> {
        self.minima[t].first()
    }
}

/// Default registry dedup tolerance: below solver noise, above genuinely
/// distinct basins.
pub const DEFAULT_DEDUP_TOL: f64 = 1e-4;

/// Computes the minima registry over a descending lambda grid. The first grid
/// point is optimized from `starts`; each later point is warm-started from all
/// minima retained at the previous point plus a fresh cold start.
pub fn compute_path(
    data: &Dataset,
    loss: &LossSpec,
    alpha: f64,
    loadings: Option<&Array1<f64>>,
    grid: &[f64],
    max_minima: usize,
    starts: &[Start],
    dedup_tol: f64,
    cfg: &OptimizeConfig,
) -> Result<MinimaRegistry> {
    if grid.is_empty() {
        return Err(Error::invalid("lambda grid must not be empty"));
    }
    if grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::invalid("lambda grid must be strictly descending"));
    }
    if max_minima == 0 {
        return Err(Error::invalid("must retain at least one minimum per lambda"));
    }
    let mut registry = MinimaRegistry {
        lambdas: grid.to_vec(),
        minima: Vec::with_capacity(grid.len()),
        max_minima,
        dedup_tol,
    };
    for (t, &lambda) in grid.iter().enumerate() {
        let penalty = PenaltySpec {
            lambda,
            alpha,
            loadings: loadings.cloned(),
        };
        let level_starts: Vec<Start> = if t == 0 {
            starts.to_vec()
        } else {
            let mut s: Vec<Start> = registry.minima[t - 1]
                .iter()
                .map(|m| Start {
                    intercept: m.intercept,
                    beta: m.beta.clone(),
                    origin: StartOrigin::WarmFromLambda,
                })
                .collect();
            s.push(Start::cold(data.p()));
            s
        };
        let minima = optimize_at_lambda(data, loss, &penalty, &level_starts, max_minima, dedup_tol, cfg);
        registry.minima.push(minima);
    }
    Ok(registry)
}

/// Base starts (zero vector and the unit-weight convex elastic-net solution)
/// plus `n_subsets` elemental starts, each a ridge-regularized least-squares
/// fit on a random subset of the rows.
pub fn generate_starts(
    data: &Dataset,
    penalty: &PenaltySpec,
    n_subsets: usize,
    rng_seed: u64,
    cfg: &OptimizeConfig,
) -> Vec<Start> {
    let n = data.n();
    let p = data.p();
    let mut starts = vec![Start::cold(p)];

    let unit = Array1::ones(n);
    let problem = WlsProblem {
        design: data.x.view(),
        response: data.y.view(),
        obs_weights: unit.view(),
        fit_intercept: true,
    };
    if let Ok(sol) = weighted_en_solve(&problem, penalty, None, cfg.inner_tol, cfg.max_inner_passes) {
        starts.push(Start {
            intercept: sol.intercept,
            beta: sol.beta,
            origin: StartOrigin::Cold,
        });
    }

    let subset_size = ((n / 2).max(2)).min(3 * p.max(5));
    let mut rng = seeding::rng_from(rng_seed);
    for _ in 0..n_subsets {
        let rows: Vec<usize> = sample(&mut rng, n, subset_size.min(n)).into_vec();
        if let Some((b0, beta)) = ridge_subset_fit(data, &rows) {
            starts.push(Start {
                intercept: b0,
                beta,
                origin: StartOrigin::SubsetStart,
            });
        }
    }
    starts
}

/// Ridge-regularized least squares with intercept on a row subset.
fn ridge_subset_fit(data: &Dataset, rows: &[usize]) -> Option<(f64, Array1<f64>)> {
    let p = data.p();
    let d = p + 1;
    let mut gram = Array2::<f64>::zeros((d, d));
    let mut rhs = vec![0.0; d];
    for &i in rows {
        let xi = data.x.row(i);
        for r in 0..d {
            let zr = if r == 0 { 1.0 } else { xi[r - 1] };
            rhs[r] += zr * data.y[i];
            for c in r..d {
                let zc = if c == 0 { 1.0 } else { xi[c - 1] };
                gram[[r, c]] += zr * zc;
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            gram[[r, c]] = gram[[c, r]];
        }
    }
    let trace: f64 = (0..d).map(|j| gram[[j, j]]).sum();
    let ridge = 1e-2 * trace / d as f64 + 1e-10;
    for j in 1..d {
        gram[[j, j]] += ridge;
    }
    let sol = crate::linalg::gaussian_solve(gram, rhs)?;
    let beta = Array1::from_iter(sol[1..].iter().copied());
    if sol.iter().all(|v| v.is_finite()) {
        Some((sol[0], beta))
    } else {
        None
    }
}

/// Adaptive elastic-net loadings from a pilot fit:
/// `(|beta_j| + eps)^(-exponent)` with a floor tied to the largest pilot
/// coefficient.
pub fn adaptive_loadings(pilot: &LocalMinimum, exponent: f64) -> Array1<f64> {
    assert!(exponent > 0.0, "adaptive exponent must be positive");
    let max_abs = pilot.beta.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
    let floor = if max_abs > 0.0 { 1e-6 * max_abs } else { 1e-6 };
    pilot.beta.mapv(|b| (b.abs() + floor).powf(-exponent))
}

/// Robust-weight lambda_max and the default log-spaced descending grid.
pub fn robust_lambda_grid(
    data: &Dataset,
    loss: &LossSpec,
    alpha: f64,
    loadings: Option<&Array1<f64>>,
    q: usize,
    min_ratio: f64,
) -> Result<Vec<f64>> {
    if q < 2 {
        return Err(Error::invalid("lambda grid needs at least two points"));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::invalid("lambda min ratio must lie in (0, 1)"));
    }
    let top = robust_lambda_max(data, loss, alpha, loadings)?;
    if !(top > 0.0) {
        return Err(Error::invalid(
            "lambda_max is zero; the response carries no signal for this penalty",
        ));
    }
    let mut grid = Vec::with_capacity(q);
    for i in 0..q {
        grid.push(top * min_ratio.powf(i as f64 / (q - 1) as f64));
    }
    Ok(grid)
}

/// Smallest lambda at which the zero coefficient vector is an IRWLS fixed
/// point: the weighted-EN lambda_max under the robustness weights of the
/// intercept-only fit, mapped back through the inner-penalty correspondence.
pub fn robust_lambda_max(
    data: &Dataset,
    loss: &LossSpec,
    alpha: f64,
    loadings: Option<&Array1<f64>>,
) -> Result<f64> {
    let n = data.n();
    let mut b0 = {
        let mut ys: Vec<f64> = data.y.to_vec();
        ys.sort_by(|a, b| a.total_cmp(b));
        crate::mscale::median_sorted(&ys)
    };
    let mut weights = Array1::ones(n);
    let mut scale_hint = None;
    let mut lambda_scale = 1.0;
    for _ in 0..100 {
        let resid: Vec<f64> = data.y.iter().map(|y| y - b0).collect();
        let (_, scale) = loss.evaluate(&resid, scale_hint)?;
        scale_hint = Some(scale);
        let wv = loss.weights(&resid, scale);
        weights = wv.weights;
        lambda_scale = loss.inner_lambda_scale(&resid, scale);
        let wsum = weights.sum();
        if !(wsum > 0.0) {
            return Err(Error::ZeroWeightSum);
        }
        let new_b0 = weights
            .iter()
            .zip(data.y.iter())
            .map(|(w, y)| w * y)
            .sum::<f64>()
            / wsum;
        let done = (new_b0 - b0).abs() < 1e-12 * (1.0 + b0.abs());
        b0 = new_b0;
        if done {
            break;
        }
    }
    let problem = WlsProblem {
        design: data.x.view(),
        response: data.y.view(),
        obs_weights: weights.view(),
        fit_intercept: true,
    };
    Ok(lambda_max(&problem, alpha, loadings)? / lambda_scale)
}

/// Deterministic seed for the RNG stream of replication `r`, fold `k`.
pub fn fold_stream_seed(seed: u64, replication: usize, fold: usize) -> u64 {
    seeding::child_seed(seeding::child_seed(seed, replication as u64 + 1), fold as u64 + 1)
}
