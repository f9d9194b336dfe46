//! Hyper-parameter selection engines.
//!
//! Two engines share the fold plumbing:
//!
//! * **Naive K-fold CV** refits the whole pipeline from scratch on every
//!   fold's training set, keeps only the presumptive global minimum per
//!   penalty level, pools held-out prediction errors and summarizes them with
//!   a (robust) scale metric.
//! * **Information-sharing CV** re-optimizes the full-data minima on each
//!   fold's training set (no fresh start search), matches every full-data
//!   minimum to its most similar fold minimum by the Pearson correlation of
//!   robustness weights, and scores each full-data minimum by a weighted
//!   held-out RMSPE that ignores the observations the minimum itself flags as
//!   outliers. Replications are aggregated into a mean and standard error per
//!   (lambda, minimum) cell.

use ndarray::Array1;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::enet::PenaltySpec;
use crate::error::{Error, Result};
use crate::mscale::WeightVector;
use crate::optimizer::{
    fold_stream_seed, generate_starts, optimize_at_lambda, LocalMinimum, LossSpec, MinimaRegistry,
    OptimizeConfig, Start, StartOrigin,
};
use crate::seeding;

/// Conventional tau-size tuning constant.
pub const DEFAULT_C_TAU: f64 = 3.0;

/// A K-fold split of `n` observations.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub n: usize,
    pub k: usize,
    /// Fold index (0-based) of every observation.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Held-out rows of fold `k`.
    pub fn fold_rows(&self, k: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[i] == k).collect()
    }

    /// Training rows of fold `k` (everything else).
    pub fn train_rows(&self, k: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[i] != k).collect()
    }
}

/// Uniform random partition into K folds whose sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k > n {
        return Err(Error::KTooLarge { n, k });
    }
    if k < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeding::rng_from(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % k;
    }
    Ok(FoldPlan {
        n,
        k,
        assignment,
        seed,
    })
}

/// Root mean-square prediction error.
pub fn metric_rmspe(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyErrors);
    }
    let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
    Ok(mean_sq.sqrt())
}

/// Median absolute prediction error.
pub fn metric_mape(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyErrors);
    }
    let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    Ok(crate::mscale::median_sorted(&abs))
}

/// tau-size: `MAPE * sqrt(mean(min(c_tau, |e|/MAPE)^2))`; zero when the MAPE
/// is zero.
pub fn metric_tau(errors: &[f64], c_tau: f64) -> Result<f64> {
    let mape = metric_mape(errors)?;
    if mape == 0.0 {
        return Ok(0.0);
    }
    let mean_sq = errors
        .iter()
        .map(|e| (e.abs() / mape).min(c_tau).powi(2))
        .sum::<f64>()
        / errors.len() as f64;
    Ok(mape * mean_sq.sqrt())
}

/// Prediction-accuracy metric for the naive engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Rmspe,
    Mape,
    Tau { c_tau: f64 },
}

impl Metric {
    pub fn apply(&self, errors: &[f64]) -> Result<f64> {
        match self {
            Metric::Rmspe => metric_rmspe(errors),
            Metric::Mape => metric_mape(errors),
            Metric::Tau { c_tau } => metric_tau(errors, *c_tau),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Metric::Rmspe => "rmspe",
            Metric::Mape => "mape",
            Metric::Tau { .. } => "tau",
        }
    }
}

/// Pearson correlation between two weight vectors.
pub fn weight_similarity(w1: &[f64], w2: &[f64]) -> Result<f64> {
    if w1.len() != w2.len() || w1.len() < 2 {
        return Err(Error::invalid(
            "weight vectors must share a length of at least 2",
        ));
    }
    let n = w1.len() as f64;
    let m1 = w1.iter().sum::<f64>() / n;
    let m2 = w2.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    for (a, b) in w1.iter().zip(w2.iter()) {
        let d1 = a - m1;
        let d2 = b - m2;
        cov += d1 * d2;
        v1 += d1 * d1;
        v2 += d2 * d2;
    }
    if v1 == 0.0 || v2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((cov / (v1 * v2).sqrt()).clamp(-1.0, 1.0))
}

/// The fold surrogate chosen for one full-data minimum.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateEntry {
    /// Index into the fold's minima list.
    pub index: usize,
    /// Pearson similarity of the matched pair; `-inf` on fallback.
    pub similarity: f64,
    /// True when every candidate pair had zero-variance weights and the
    /// lowest-objective fold minimum was used instead.
    pub fallback: bool,
}

/// Matches each full-data minimum (through its weight vector evaluated on the
/// fold's training observations) to the most similar fold minimum. Duplicates
/// are allowed; ties break toward the lower fold objective.
pub fn match_surrogates(
    full_on_fold: &[Option<Array1<f64>>],
    fold_minima: &[LocalMinimum],
) -> Result<Vec<SurrogateEntry>> {
    if fold_minima.is_empty() {
        return Err(Error::invalid("no fold minima to match against"));
    }
    let mut entries = Vec::with_capacity(full_on_fold.len());
    for weights in full_on_fold {
        let mut best: Option<(usize, f64)> = None;
        if let Some(w_full) = weights {
            // Fold minima are ordered by objective, so keeping the first
            // strict maximum realizes the lower-objective tie-break.
            for (idx, cand) in fold_minima.iter().enumerate() {
                let sim = match weight_similarity(
                    w_full.as_slice().unwrap(),
                    cand.weights.weights.as_slice().unwrap(),
                ) {
                    Ok(s) => s,
                    Err(Error::ZeroVariance) => continue,
                    Err(e) => return Err(e),
                };
                if best.is_none() || sim > best.unwrap().1 {
                    best = Some((idx, sim));
                }
            }
        }
        entries.push(match best {
            Some((idx, sim)) => SurrogateEntry {
                index: idx,
                similarity: sim,
                fallback: false,
            },
            // Every candidate hit ZeroVariance (or the full-data weights were
            // unavailable on this fold): fall back to the best fold minimum.
            None => SurrogateEntry {
                index: 0,
                similarity: f64::NEG_INFINITY,
                fallback: true,
            },
        });
    }
    Ok(entries)
}

/// Weighted held-out RMSPE of one full-data minimum.
///
/// Observation `i` in fold `k` is predicted with that fold's surrogate fit;
/// the squared errors are weighted by the full-data minimum's own robustness
/// weights and normalized by their total over all observations. Folds without
/// a surrogate contribute nothing; with no surviving fold (or an all-zero
/// weight vector) the +inf sentinel is returned.
pub fn weighted_rmspe(
    full_weights: &WeightVector,
    surrogates: &[Option<(f64, Array1<f64>)>],
    plan: &FoldPlan,
    data: &Dataset,
) -> f64 {
    let total: f64 = full_weights.sum();
    if !(total > 0.0) {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    let mut any = false;
    for (k, fit) in surrogates.iter().enumerate() {
        let Some((b0, beta)) = fit else { continue };
        any = true;
        for i in plan.fold_rows(k) {
            let pred = b0 + data.x.row(i).dot(beta);
            let e = data.y[i] - pred;
            acc += full_weights.weights[i] * e * e;
        }
    }
    if !any {
        return f64::INFINITY;
    }
    (acc / total).sqrt()
}

/// One (lambda, minimum) cell of a CV outcome.
#[derive(Debug, Clone, Copy)]
pub struct CvCell {
    /// Mean estimated prediction error across replications (+inf sentinel when
    /// no replication produced a finite estimate).
    pub e_hat: f64,
    /// Standard error across replications.
    pub sd: f64,
    /// True when fold contributions were lost for this cell.
    pub flagged: bool,
}

/// Per-(lambda, minimum) prediction-error estimates.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub lambdas: Vec<f64>,
    /// `cells[t][q]` follows the registry's minima ordering at `lambdas[t]`.
    pub cells: Vec<Vec<CvCell>>,
    /// Best minimum index per lambda.
    pub q_hat: Vec<usize>,
    pub replications: usize,
    pub folds: usize,
    pub metric_label: &'static str,
}

impl CvOutcome {
    /// The CV curve: `e_hat` at the selected minimum per lambda.
    pub fn curve(&self) -> Vec<f64> {
        self.lambdas
            .iter()
            .enumerate()
            .map(|(t, _)| {
                self.cells[t]
                    .get(self.q_hat[t])
                    .map_or(f64::INFINITY, |c| c.e_hat)
            })
            .collect()
    }
}

/// Penalty shape shared across the lambda grid.
#[derive(Debug, Clone)]
pub struct PenaltyFamily {
    pub alpha: f64,
    pub loadings: Option<Array1<f64>>,
}

impl PenaltyFamily {
    pub fn new(alpha: f64) -> Self {
        PenaltyFamily {
            alpha,
            loadings: None,
        }
    }

    pub fn at(&self, lambda: f64) -> PenaltySpec {
        PenaltySpec {
            lambda,
            alpha: self.alpha,
            loadings: self.loadings.clone(),
        }
    }
}

/// Shared knobs of both CV engines.
#[derive(Debug, Clone)]
pub struct CvConfig {
    pub folds: usize,
    pub replications: usize,
    pub seed: u64,
    /// Metric for the naive engine (information sharing always scores with the
    /// weighted RMSPE).
    pub metric: Metric,
    /// Elemental starts per from-scratch fold fit (naive engine only).
    pub n_subsets: usize,
    pub dedup_tol: f64,
    pub optimize: OptimizeConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 7,
            replications: 5,
            seed: 1,
            metric: Metric::Tau {
                c_tau: DEFAULT_C_TAU,
            },
            n_subsets: 50,
            dedup_tol: crate::optimizer::DEFAULT_DEDUP_TOL,
            optimize: OptimizeConfig::default(),
        }
    }
}

impl CvConfig {
    /// Optimizer tolerances for fold-level fits. Fold minima only feed weight
    /// vectors and held-out predictions, neither of which resolves below
    /// 1e-3 in the coefficients, so the movement criterion is relaxed and the
    /// outer budget trimmed relative to the registry-grade configuration.
    fn fold_optimize(&self) -> OptimizeConfig {
        OptimizeConfig {
            move_tol: self.optimize.move_tol.max(1e-3),
            max_outer: self.optimize.max_outer.min(150),
            ..self.optimize
        }
    }
}

/// Naive replicated K-fold CV: from-scratch global-minimum paths per fold,
/// pooled held-out errors, metric per lambda, population-form standard error
/// across replications.
pub fn naive_cv(
    registry: &MinimaRegistry,
    data: &Dataset,
    loss: &LossSpec,
    family: &PenaltyFamily,
    cfg: &CvConfig,
) -> Result<CvOutcome> {
    let grid = &registry.lambdas;
    let n = data.n();
    let q = grid.len();
    // per replication, per lambda: metric value
    let mut per_rep = vec![vec![f64::INFINITY; q]; cfg.replications];
    let mut flagged = vec![false; q];

    for (r, rep) in per_rep.iter_mut().enumerate() {
        let plan = make_folds(n, cfg.folds, seeding::child_seed(cfg.seed, r as u64))?;
        // Fold tasks run in parallel; the pooled reduction below is ordered.
        let fold_errors: Vec<Vec<Option<Vec<f64>>>> = (0..cfg.folds)
            .into_par_iter()
            .map(|k| naive_fold_errors(registry, data, loss, family, cfg, &plan, r, k))
            .collect();
        for (t, slot) in rep.iter_mut().enumerate() {
            let mut pool: Vec<f64> = Vec::new();
            let mut missing = false;
            for errors in fold_errors.iter() {
                match &errors[t] {
                    Some(es) => pool.extend_from_slice(es),
                    None => missing = true,
                }
            }
            if missing {
                flagged[t] = true;
            }
            *slot = if pool.is_empty() {
                f64::INFINITY
            } else {
                cfg.metric.apply(&pool)?
            };
        }
    }

    let mut cells = Vec::with_capacity(q);
    for t in 0..q {
        let vals: Vec<f64> = (0..cfg.replications).map(|r| per_rep[r][t]).collect();
        let cell = if vals.iter().any(|v| !v.is_finite()) {
            CvCell {
                e_hat: f64::INFINITY,
                sd: f64::INFINITY,
                flagged: true,
            }
        } else {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            // Population form: SE = sqrt((1/R) sum (S_r - S)^2).
            let var =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            CvCell {
                e_hat: mean,
                sd: var.sqrt(),
                flagged: flagged[t],
            }
        };
        cells.push(vec![cell]);
    }
    Ok(CvOutcome {
        lambdas: grid.clone(),
        cells,
        q_hat: vec![0; q],
        replications: cfg.replications,
        folds: cfg.folds,
        metric_label: cfg.metric.label(),
    })
}

/// Held-out errors of one naive fold: a from-scratch path on the training
/// rows (the same search as the full-data fit, multiple minima tracked but
/// only the per-lambda global used), evaluated on the held-out rows; `None`
/// per lambda when the fold fit failed there.
fn naive_fold_errors(
    registry: &MinimaRegistry,
    data: &Dataset,
    loss: &LossSpec,
    family: &PenaltyFamily,
    cfg: &CvConfig,
    plan: &FoldPlan,
    r: usize,
    k: usize,
) -> Vec<Option<Vec<f64>>> {
    let grid = &registry.lambdas;
    let train = data.subset(&plan.train_rows(k));
    let fold_cfg = cfg.fold_optimize();
    let starts = generate_starts(
        &train,
        &family.at(grid[0]),
        cfg.n_subsets,
        fold_stream_seed(cfg.seed, r, k),
        &fold_cfg,
    );
    let path = crate::optimizer::compute_path(
        &train,
        loss,
        family.alpha,
        family.loadings.as_ref(),
        grid,
        registry.max_minima,
        &starts,
        cfg.dedup_tol,
        &fold_cfg,
    );
    let fold_rows = plan.fold_rows(k);
    match path {
        Ok(reg_k) => grid
            .iter()
            .enumerate()
            .map(|(t, _)| {
                reg_k.best(t).map(|m| {
                    fold_rows
                        .iter()
                        .map(|&i| data.y[i] - (m.intercept + data.x.row(i).dot(&m.beta)))
                        .collect()
                })
            })
            .collect(),
        Err(e) => {
            log::warn!("naive fold fit failed (replication {r}, fold {k}): {e}");
            vec![None; grid.len()]
        }
    }
}

/// Per-fold output of the information-sharing engine: for each lambda, the
/// surrogate fit (intercept, coefficients) matched to every full-data minimum.
type RisFoldFits = Vec<Vec<Option<(f64, Array1<f64>)>>>;

/// Information-sharing replicated K-fold CV: warm fold starts from the
/// full-data minima, weight-based surrogate matching, weighted held-out
/// RMSPE, sample-form standard error across replications.
pub fn ris_cv(
    registry: &MinimaRegistry,
    data: &Dataset,
    loss: &LossSpec,
    family: &PenaltyFamily,
    cfg: &CvConfig,
) -> Result<CvOutcome> {
    let grid = &registry.lambdas;
    let n = data.n();
    let q = grid.len();
    // per replication, per lambda, per minimum: weighted RMSPE
    let mut per_rep: Vec<Vec<Vec<f64>>> = Vec::with_capacity(cfg.replications);

    for r in 0..cfg.replications {
        let plan = make_folds(n, cfg.folds, seeding::child_seed(cfg.seed, r as u64))?;
        let fold_fits: Vec<RisFoldFits> = (0..cfg.folds)
            .into_par_iter()
            .map(|k| ris_fold_fits(registry, data, loss, family, cfg, &plan, k))
            .collect();
        let mut rep = Vec::with_capacity(q);
        for t in 0..q {
            let m_count = registry.minima[t].len();
            let mut row = Vec::with_capacity(m_count);
            for j in 0..m_count {
                let surrogates: Vec<Option<(f64, Array1<f64>)>> = (0..cfg.folds)
                    .map(|k| fold_fits[k][t][j].clone())
                    .collect();
                row.push(weighted_rmspe(
                    &registry.minima[t][j].weights,
                    &surrogates,
                    &plan,
                    data,
                ));
            }
            rep.push(row);
        }
        per_rep.push(rep);
    }

    let mut cells = Vec::with_capacity(q);
    let mut q_hat = Vec::with_capacity(q);
    for t in 0..q {
        let m_count = registry.minima[t].len();
        let mut row = Vec::with_capacity(m_count);
        for j in 0..m_count {
            let vals: Vec<f64> = (0..cfg.replications).map(|r| per_rep[r][t][j]).collect();
            let cell = if vals.iter().any(|v| !v.is_finite()) {
                CvCell {
                    e_hat: f64::INFINITY,
                    sd: f64::INFINITY,
                    flagged: true,
                }
            } else {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                // Sample form: SD = sqrt(sum (E_r - E)^2 / (R - 1)).
                let sd = if vals.len() > 1 {
                    (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (vals.len() - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                CvCell {
                    e_hat: mean,
                    sd,
                    flagged: false,
                }
            };
            row.push(cell);
        }
        let best = (0..m_count)
            .min_by(|&a, &b| row[a].e_hat.total_cmp(&row[b].e_hat))
            .unwrap_or(0);
        cells.push(row);
        q_hat.push(best);
    }
    Ok(CvOutcome {
        lambdas: grid.clone(),
        cells,
        q_hat,
        replications: cfg.replications,
        folds: cfg.folds,
        metric_label: "weighted-rmspe",
    })
}

/// Fold fits of the information-sharing engine: per lambda, optimize the
/// fold's training rows from every full-data minimum, dedup, match surrogates.
fn ris_fold_fits(
    registry: &MinimaRegistry,
    data: &Dataset,
    loss: &LossSpec,
    family: &PenaltyFamily,
    cfg: &CvConfig,
    plan: &FoldPlan,
    k: usize,
) -> RisFoldFits {
    let grid = &registry.lambdas;
    let train_rows = plan.train_rows(k);
    let train = data.subset(&train_rows);
    let mut fits: RisFoldFits = Vec::with_capacity(grid.len());
    for (t, &lambda) in grid.iter().enumerate() {
        let full_minima = &registry.minima[t];
        if full_minima.is_empty() {
            fits.push(Vec::new());
            continue;
        }
        let starts: Vec<Start> = full_minima
            .iter()
            .map(|m| Start {
                intercept: m.intercept,
                beta: m.beta.clone(),
                origin: StartOrigin::WarmFromFullFit,
            })
            .collect();
        let fold_minima = optimize_at_lambda(
            &train,
            loss,
            &family.at(lambda),
            &starts,
            registry.max_minima,
            cfg.dedup_tol,
            &cfg.fold_optimize(),
        );
        if fold_minima.is_empty() {
            log::warn!("no fold minima at lambda index {t} (fold {k})");
            fits.push(vec![None; full_minima.len()]);
            continue;
        }
        // Full-data minima re-expressed as weights on the fold's training
        // observations, the common ground for similarity.
        let full_on_fold: Vec<Option<Array1<f64>>> = full_minima
            .iter()
            .map(|m| {
                let resid = train.residuals(m.intercept, &m.beta);
                let resid_slice = resid.as_slice().unwrap();
                match loss.evaluate(resid_slice, Some(m.scale)) {
                    Ok((_, scale)) => Some(loss.weights(resid_slice, scale).weights),
                    Err(_) => None,
                }
            })
            .collect();
        match match_surrogates(&full_on_fold, &fold_minima) {
            Ok(entries) => fits.push(
                entries
                    .iter()
                    .map(|e| {
                        let m = &fold_minima[e.index];
                        Some((m.intercept, m.beta.clone()))
                    })
                    .collect(),
            ),
            Err(e) => {
                log::warn!("surrogate matching failed at lambda index {t} (fold {k}): {e}");
                fits.push(vec![None; full_minima.len()]);
            }
        }
    }
    fits
}

/// Selection rules over a CV outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    Min,
    OneSe,
}

/// A selected (lambda, minimum) pair.
#[derive(Debug, Clone, Copy)]
pub struct Selection {
    pub lambda_index: usize,
    pub lambda: f64,
    pub q: usize,
    pub e_hat: f64,
    pub sd: f64,
}

/// Applies the min rule or the 1-SE rule to the per-lambda best cells.
pub fn select_lambda(outcome: &CvOutcome, rule: SelectionRule) -> Result<Selection> {
    // Candidates: (t, q_hat[t]) with finite estimates; lambdas descend with t.
    let mut best: Option<Selection> = None;
    for (t, &lambda) in outcome.lambdas.iter().enumerate() {
        let Some(cell) = outcome.cells[t].get(outcome.q_hat[t]) else {
            continue;
        };
        if !cell.e_hat.is_finite() {
            continue;
        }
        let cand = Selection {
            lambda_index: t,
            lambda,
            q: outcome.q_hat[t],
            e_hat: cell.e_hat,
            sd: cell.sd,
        };
        // Strict inequality keeps the earlier (larger) lambda on ties.
        if best.is_none() || cand.e_hat < best.unwrap().e_hat {
            best = Some(cand);
        }
    }
    let best = best.ok_or(Error::AllInfinite)?;
    match rule {
        SelectionRule::Min => Ok(best),
        SelectionRule::OneSe => {
            let threshold = best.e_hat + best.sd;
            for (t, &lambda) in outcome.lambdas.iter().enumerate() {
                let Some(cell) = outcome.cells[t].get(outcome.q_hat[t]) else {
                    continue;
                };
                if cell.e_hat.is_finite() && cell.e_hat <= threshold {
                    // First hit is the largest qualifying lambda.
                    return Ok(Selection {
                        lambda_index: t,
                        lambda,
                        q: outcome.q_hat[t],
                        e_hat: cell.e_hat,
                        sd: cell.sd,
                    });
                }
            }
            Ok(best)
        }
    }
}
