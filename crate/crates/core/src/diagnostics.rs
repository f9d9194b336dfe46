//! Numerical reproduction of the non-smooth regularization-path phenomenon.
//!
//! A univariate two-population model makes the penalized M-objective have one
//! local minimum per population. As the penalty grows, the global minimum
//! jumps from the far basin to the near one, so the global-minimum path has a
//! discontinuity even though each basin's path drifts smoothly. This module
//! enumerates all univariate minima exhaustively per penalty level, detects
//! discontinuities on traces, and measures the total variation of curves.
//!
//! The diagnostic objective is `(1/n) sum_i rho(y_i - beta x_i) + lambda |beta|`
//! with unit residual scale; for rho quadratic near zero the two basin
//! locations drift as `beta_c - lambda n / (b n - 2)` and
//! `beta_star - lambda n / ((1 - b) n - 2)`.

use ndarray::Array1;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rho::{calibrate_cutoff, RhoFunction, RhoKind};
use crate::seeding;

/// The two-population univariate scenario.
#[derive(Debug, Clone)]
pub struct UnivariateScenario {
    pub sigma_c: f64,
    pub sigma_star: f64,
    pub beta_c: f64,
    pub beta_star: f64,
    /// Fraction of observations in the near population; 0 disables it.
    pub b: f64,
    pub n: usize,
    pub rho: RhoFunction,
    /// Descending penalty grid.
    pub lambda_grid: Vec<f64>,
}

impl Default for UnivariateScenario {
    fn default() -> Self {
        UnivariateScenario {
            sigma_c: 0.01,
            sigma_star: 0.1,
            beta_c: 0.5,
            beta_star: 100.0,
            b: 0.3,
            n: 100,
            rho: calibrate_cutoff(RhoKind::Bisquare, 0.5).expect("bisquare calibrates at 0.5"),
            lambda_grid: linear_grid(0.02, 1e-4, 50),
        }
    }
}

/// Linearly spaced descending grid. The univariate demo uses linear spacing
/// so adjacent-grid drift is comparable across the grid and the jump detector
/// sees a single scale.
pub fn linear_grid(top: f64, bottom: f64, q: usize) -> Vec<f64> {
    assert!(top > bottom && q >= 2);
    let step = (top - bottom) / (q - 1) as f64;
    (0..q).map(|i| top - i as f64 * step).collect()
}

/// One simulated draw of the scenario.
#[derive(Debug, Clone)]
pub struct UnivariateData {
    pub x: Array1<f64>,
    pub y: Array1<f64>,
    /// True for rows of the near (beta_c) population.
    pub near_population: Vec<bool>,
}

impl UnivariateScenario {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.b) {
            return Err(Error::invalid("population fraction b must lie in [0, 0.5)"));
        }
        if self.n < 10 {
            return Err(Error::invalid("univariate scenario needs n >= 10"));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::invalid("lambda grid must be non-empty and descending"));
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<UnivariateData> {
        self.validate()?;
        let mut rng = seeding::rng_from(seed);
        let near_count = (self.b * self.n as f64).floor() as usize;
        let mut x = Array1::zeros(self.n);
        let mut y = Array1::zeros(self.n);
        let mut near = vec![false; self.n];
        for i in 0..self.n {
            let xi: f64 = StandardNormal.sample(&mut rng);
            let noise: f64 = StandardNormal.sample(&mut rng);
            x[i] = xi;
            if i < near_count {
                near[i] = true;
                y[i] = self.beta_c * xi + self.sigma_c * noise;
            } else {
                y[i] = self.beta_star * xi + self.sigma_star * noise;
            }
        }
        Ok(UnivariateData {
            x,
            y,
            near_population: near,
        })
    }

    /// Expected location of the basin minimum that drifts from `anchor`.
    pub fn expected_minimum(&self, anchor_near: bool, lambda: f64) -> f64 {
        let n = self.n as f64;
        let count = if anchor_near { self.b * n } else { (1.0 - self.b) * n };
        let anchor = if anchor_near { self.beta_c } else { self.beta_star };
        anchor - lambda * n / (count - 2.0)
    }

    /// Standard error of the basin minimum location around its expectation.
    pub fn minimum_std_error(&self, anchor_near: bool, lambda: f64) -> f64 {
        let n = self.n as f64;
        let count = if anchor_near { self.b * n } else { (1.0 - self.b) * n };
        let sigma = if anchor_near { self.sigma_c } else { self.sigma_star };
        let var = (sigma * sigma
            + 2.0 * lambda * lambda * n * n / ((count - 4.0) * (count - 2.0)))
            / (count - 2.0);
        var.sqrt()
    }
}

/// Penalized univariate M-objective: `(1/n) sum rho(y - beta x) + lambda |beta|`.
pub fn univariate_objective(data: &UnivariateData, rho: &RhoFunction, lambda: f64, beta: f64) -> f64 {
    let n = data.x.len() as f64;
    let loss: f64 = data
        .x
        .iter()
        .zip(data.y.iter())
        .map(|(&x, &y)| rho.rho(y - beta * x))
        .sum::<f64>()
        / n;
    loss + lambda * beta.abs()
}

/// Derivative of the objective away from beta = 0.
fn univariate_derivative(data: &UnivariateData, rho: &RhoFunction, lambda: f64, beta: f64) -> f64 {
    let n = data.x.len() as f64;
    let smooth: f64 = -data
        .x
        .iter()
        .zip(data.y.iter())
        .map(|(&x, &y)| rho.psi(y - beta * x) * x)
        .sum::<f64>()
        / n;
    smooth + lambda * beta.signum()
}

/// All local minima of the penalized univariate objective, by dense scanning
/// of the derivative's sign changes with bisection refinement.
pub fn enumerate_univariate_minima(
    data: &UnivariateData,
    rho: &RhoFunction,
    lambda: f64,
    lower: f64,
    upper: f64,
    grid_points: usize,
) -> Vec<(f64, f64)> {
    assert!(grid_points >= 100 && upper > lower);
    let step = (upper - lower) / grid_points as f64;
    let mut minima: Vec<(f64, f64)> = Vec::new();

    let push_minimum = |loc: f64, minima: &mut Vec<(f64, f64)>| {
        let dedup = 1e-7 * (1.0 + loc.abs());
        if minima.iter().all(|(l, _)| (l - loc).abs() > dedup) {
            minima.push((loc, univariate_objective(data, rho, lambda, loc)));
        }
    };

    // The penalty kink hosts a minimum when zero lies in the subgradient.
    if lower < 0.0 && upper > 0.0 {
        let n = data.x.len() as f64;
        let smooth: f64 = -data
            .x
            .iter()
            .zip(data.y.iter())
            .map(|(&x, &y)| rho.psi(y) * x)
            .sum::<f64>()
            / n;
        if smooth - lambda < 0.0 && smooth + lambda > 0.0 {
            push_minimum(0.0, &mut minima);
        }
    }

    let mut prev_beta = lower;
    let mut prev_d = univariate_derivative(data, rho, lambda, lower);
    for g in 1..=grid_points {
        let beta = lower + g as f64 * step;
        // Never bisect across the kink at zero.
        if prev_beta < 0.0 && beta > 0.0 {
            prev_beta = 0.0_f64.min(beta);
            prev_d = univariate_derivative(data, rho, lambda, f64::MIN_POSITIVE);
            continue;
        }
        let d = univariate_derivative(data, rho, lambda, beta);
        if prev_d < 0.0 && d >= 0.0 {
            // Minimum inside (prev_beta, beta): refine by bisection.
            let (mut lo, mut hi) = (prev_beta, beta);
            while hi - lo > 1e-8 {
                let mid = 0.5 * (lo + hi);
                if univariate_derivative(data, rho, lambda, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            push_minimum(0.5 * (lo + hi), &mut minima);
        }
        prev_beta = beta;
        prev_d = d;
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima
}

/// Flagged jump on a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discontinuity {
    /// Index of the left grid point of the jump.
    pub index: usize,
    pub jump: f64,
}

/// Flags adjacent-grid jumps exceeding `rel_threshold` times the median
/// adjacent change.
pub fn detect_discontinuities(trace: &[f64], rel_threshold: f64) -> Vec<Discontinuity> {
    if trace.len() < 2 {
        return Vec::new();
    }
    let diffs: Vec<f64> = trace
        .windows(2)
        .map(|w| {
            if w[0].is_finite() && w[1].is_finite() {
                (w[1] - w[0]).abs()
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut finite: Vec<f64> = diffs.iter().copied().filter(|d| d.is_finite()).collect();
    if finite.is_empty() {
        return Vec::new();
    }
    finite.sort_by(|a, b| a.total_cmp(b));
    let med = crate::mscale::median_sorted(&finite);
    diffs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite() && **d > rel_threshold * med)
        .map(|(i, d)| Discontinuity { index: i, jump: *d })
        .collect()
}

/// Sum of absolute adjacent differences; pairs with a non-finite endpoint are
/// skipped.
pub fn total_variation(trace: &[f64]) -> f64 {
    trace
        .windows(2)
        .filter(|w| w[0].is_finite() && w[1].is_finite())
        .map(|w| (w[1] - w[0]).abs())
        .sum()
}

/// Default relative threshold for discontinuity detection.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 10.0;

/// Location of one enumerated minimum on the scenario grid.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub lambda: f64,
    pub location: f64,
    pub objective: f64,
    pub is_global: bool,
}

/// Exhaustive per-lambda enumeration with global-minimum trace and detected
/// discontinuities.
#[derive(Debug, Clone)]
pub struct PathReport {
    pub lambdas: Vec<f64>,
    pub points: Vec<PathPoint>,
    pub global_trace: Vec<f64>,
    pub discontinuities: Vec<(f64, f64)>,
}

/// Runs the scenario end to end: enumerate minima on every grid lambda, track
/// the global minimum and flag its jumps.
pub fn scan_scenario(scenario: &UnivariateScenario, data: &UnivariateData) -> Result<PathReport> {
    scenario.validate()?;
    let span = scenario.beta_star.max(scenario.beta_c).max(0.0);
    let lower = scenario.beta_c.min(0.0) - 2.0;
    let upper = span + 2.0;
    let mut points = Vec::new();
    let mut global_trace = Vec::with_capacity(scenario.lambda_grid.len());
    for &lambda in &scenario.lambda_grid {
        let minima =
            enumerate_univariate_minima(data, &scenario.rho, lambda, lower, upper, 20_000);
        let best = minima
            .iter()
            .map(|(_, obj)| *obj)
            .fold(f64::INFINITY, f64::min);
        let mut global_loc = f64::NAN;
        for (loc, obj) in &minima {
            let is_global = *obj == best;
            if is_global {
                global_loc = *loc;
            }
            points.push(PathPoint {
                lambda,
                location: *loc,
                objective: *obj,
                is_global,
            });
        }
        global_trace.push(global_loc);
    }
    let discontinuities = detect_discontinuities(&global_trace, DEFAULT_JUMP_THRESHOLD)
        .into_iter()
        .map(|d| (scenario.lambda_grid[d.index], d.jump))
        .collect();
    Ok(PathReport {
        lambdas: scenario.lambda_grid.clone(),
        points,
        global_trace,
        discontinuities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn total_variation_basics() {
        assert_eq!(total_variation(&[2.0, 2.0, 2.0]), 0.0);
        assert_abs_diff_eq!(total_variation(&[0.0, 1.5, 3.0]), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(total_variation(&[1.0, 3.0, 2.0]), 3.0, epsilon = 1e-15);
        // Non-finite entries are skipped pairwise.
        assert_abs_diff_eq!(
            total_variation(&[1.0, f64::INFINITY, 2.0, 3.0]),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn discontinuity_detection_cases() {
        // Monotone smooth trace: nothing flagged.
        let smooth: Vec<f64> = (0..50).map(|i| (i as f64) * 0.1).collect();
        assert!(detect_discontinuities(&smooth, 10.0).is_empty());

        // Synthetic step at a known index: flagged there only.
        let mut step = vec![1.0; 40];
        for v in step.iter_mut().skip(20) {
            *v = 5.0;
        }
        let found = detect_discontinuities(&step, 10.0);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].index, 19);
        assert_abs_diff_eq!(found[0].jump, 4.0, epsilon = 1e-15);
    }

    #[test]
    fn two_minima_near_predicted_locations() {
        let scenario = UnivariateScenario::default();
        let data = scenario.generate(7).unwrap();
        let lambda = 0.001;
        let minima = enumerate_univariate_minima(&data, &scenario.rho, lambda, -2.0, 102.0, 20_000);
        assert_eq!(minima.len(), 2, "minima: {minima:?}");
        for (anchor_near, loc) in [(true, minima[0].0), (false, minima[1].0)] {
            let predicted = scenario.expected_minimum(anchor_near, lambda);
            let se = scenario.minimum_std_error(anchor_near, lambda);
            assert!(
                (loc - predicted).abs() <= 3.0 * se,
                "minimum {loc} vs predicted {predicted} (3 SE = {})",
                3.0 * se
            );
        }
    }

    #[test]
    fn both_rho_families_show_two_minima() {
        for kind in [RhoKind::Bisquare, RhoKind::Lqq] {
            let scenario = UnivariateScenario {
                rho: calibrate_cutoff(kind, 0.5).unwrap(),
                ..UnivariateScenario::default()
            };
            let data = scenario.generate(3).unwrap();
            let minima =
                enumerate_univariate_minima(&data, &scenario.rho, 0.002, -2.0, 102.0, 20_000);
            assert_eq!(minima.len(), 2, "{kind:?} produced {minima:?}");
        }
    }

    #[test]
    fn single_population_has_single_minimum() {
        // b = 0 and lambda = 0: one minimum at the M-estimate of the slope.
        let scenario = UnivariateScenario {
            b: 0.0,
            lambda_grid: vec![0.01, 0.001],
            ..UnivariateScenario::default()
        };
        let data = scenario.generate(11).unwrap();
        let minima = enumerate_univariate_minima(&data, &scenario.rho, 0.0, -2.0, 102.0, 20_000);
        assert_eq!(minima.len(), 1);
        assert!((minima[0].0 - scenario.beta_star).abs() < 0.1);
    }

    #[test]
    fn refinement_stability_under_denser_grids() {
        let scenario = UnivariateScenario::default();
        let data = scenario.generate(19).unwrap();
        let coarse = enumerate_univariate_minima(&data, &scenario.rho, 0.003, -2.0, 102.0, 20_000);
        let fine = enumerate_univariate_minima(&data, &scenario.rho, 0.003, -2.0, 102.0, 40_000);
        assert_eq!(coarse.len(), fine.len());
        for (c, f) in coarse.iter().zip(fine.iter()) {
            assert!((c.0 - f.0).abs() < 1e-6);
        }
    }

    #[test]
    fn global_trace_jumps_once_branches_are_smooth() {
        let scenario = UnivariateScenario::default();
        let data = scenario.generate(23).unwrap();
        let report = scan_scenario(&scenario, &data).unwrap();
        assert_eq!(
            report.discontinuities.len(),
            1,
            "discontinuities: {:?}",
            report.discontinuities
        );
        let jump = report.discontinuities[0].1;
        assert!(
            (80.0..=110.0).contains(&jump),
            "jump magnitude {jump} outside the two-basin gap"
        );

        // Per-basin traces are continuous: assign each lambda's minima to the
        // nearest branch anchor and check against the predicted drift.
        let mid = 0.5 * (scenario.beta_c + scenario.beta_star);
        for (anchor_near, anchor) in [(true, scenario.beta_c), (false, scenario.beta_star)] {
            let mut trace = Vec::new();
            for &lambda in &scenario.lambda_grid {
                let minima =
                    enumerate_univariate_minima(&data, &scenario.rho, lambda, -2.0, 102.0, 20_000);
                let own: Vec<f64> = minima
                    .iter()
                    .map(|(l, _)| *l)
                    .filter(|l| (*l < mid) == anchor_near)
                    .collect();
                assert_eq!(own.len(), 1, "branch {anchor} at lambda {lambda}: {own:?}");
                trace.push(own[0]);
                let predicted = scenario.expected_minimum(anchor_near, lambda);
                let se = scenario.minimum_std_error(anchor_near, lambda);
                assert!((own[0] - predicted).abs() <= 3.0 * se);
            }
            assert!(detect_discontinuities(&trace, DEFAULT_JUMP_THRESHOLD).is_empty());
        }
    }
}
