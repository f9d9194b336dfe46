//! The M-scale equation and per-observation robustness weights.
//!
//! The scale `sigma` of a residual vector is defined implicitly by
//! `mean_i rho(r_i / sigma) / rho_sup = delta`, where `delta` is the breakdown
//! point. The equation's left side is non-increasing in `sigma`, so it is
//! solved by a bracketed Newton iteration with bisection fallback, starting
//! from the MAD.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::rho::RhoFunction;

/// Parameters of the M-scale equation.
#[derive(Debug, Clone)]
pub struct MScaleSpec {
    /// Breakdown point; the right-hand side of the scale equation.
    pub delta: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl MScaleSpec {
    pub fn new(delta: f64) -> Self {
        MScaleSpec {
            delta,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(Error::invalid(format!(
                "breakdown delta must lie in (0, 0.5], got {}",
                self.delta
            )));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::invalid(
                "m-scale tolerance must be positive and max_iterations nonzero",
            ));
        }
        Ok(())
    }
}

/// Normalized robustness weights together with the scale that standardized the
/// residuals.
#[derive(Debug, Clone)]
pub struct WeightVector {
    pub weights: Array1<f64>,
    pub source_scale: f64,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.sum()
    }

    pub fn zero_count(&self) -> usize {
        self.weights.iter().filter(|w| **w == 0.0).count()
    }
}

/// Solves the M-scale equation with MAD initialization.
pub fn m_scale(residuals: &[f64], rho: &RhoFunction, spec: &MScaleSpec) -> Result<f64> {
    m_scale_from(residuals, rho, spec, None)
}

/// Same as [`m_scale`] but optionally warm-started, e.g. from the previous
/// IRWLS iteration's scale.
pub fn m_scale_from(
    residuals: &[f64],
    rho: &RhoFunction,
    spec: &MScaleSpec,
    init: Option<f64>,
) -> Result<f64> {
    spec.validate()?;
    let n = residuals.len();
    if n == 0 {
        return Err(Error::invalid("m_scale needs at least one residual"));
    }
    let nonzero = residuals.iter().filter(|r| **r != 0.0).count();
    if nonzero == 0 {
        return Ok(0.0);
    }
    // The equation's left side cannot exceed nonzero/n as sigma -> 0, so a
    // positive root exists only if more than floor(delta * n) residuals are
    // nonzero.
    if (nonzero as f64) <= spec.delta * n as f64 {
        return Err(Error::DegenerateResiduals {
            n,
            nonzero,
            delta: spec.delta,
        });
    }

    let mut sigma = match init {
        Some(s) if s > 0.0 && s.is_finite() => s,
        _ => mad_initial(residuals),
    };
    debug_assert!(sigma > 0.0);

    // g(sigma) = mean rho_norm(r / sigma) - delta is non-increasing in sigma.
    // Newton steps (guarded by the bracket accumulated from evaluated signs)
    // handle the near-breakdown regime where the plain multiplicative
    // fixed-point iteration stalls; bisection guarantees progress whenever a
    // Newton step is rejected.
    let inv_n = 1.0 / n as f64;
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let mut gap = f64::INFINITY;
    for _ in 0..spec.max_iterations {
        let mut mean_rho = 0.0;
        let mut mean_score = 0.0; // mean psi_norm(u) * u, u = r / sigma
        for r in residuals {
            let u = r / sigma;
            mean_rho += rho.rho_normalized(u);
            mean_score += rho.rho_normalized_prime(u) * u;
        }
        mean_rho *= inv_n;
        mean_score *= inv_n;
        gap = mean_rho - spec.delta;
        if gap.abs() < spec.tolerance {
            return Ok(sigma);
        }
        if gap > 0.0 {
            lo = lo.max(sigma);
        } else {
            hi = hi.min(sigma);
        }
        // g'(sigma) = -mean_score / sigma.
        let newton = sigma + gap * sigma / mean_score;
        sigma = if mean_score > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            // Still unbracketed above: grow multiplicatively.
            sigma * (mean_rho / spec.delta).sqrt().max(1.5)
        };
        if !sigma.is_finite() || sigma <= 0.0 {
            break;
        }
    }
    Err(Error::NonConvergence {
        routine: "m_scale",
        iterations: spec.max_iterations,
        residual: gap.abs(),
    })
}

/// Median of |r| over nonzero entries, scaled by the normal-consistency
/// constant 0.6745.
fn mad_initial(residuals: &[f64]) -> f64 {
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).expect("residuals must not be NaN"));
    let med = median_sorted(&abs);
    if med > 0.0 {
        med / 0.6745
    } else {
        // More than half the residuals are exactly zero; fall back to the
        // median of the nonzero magnitudes.
        let nz: Vec<f64> = abs.into_iter().filter(|a| *a > 0.0).collect();
        median_sorted(&nz) / 0.6745
    }
}

pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Eq.-(5)-style robustness weights: raw weight `W(r_i / scale)`, normalized
/// to average 1 over the observations with nonzero raw weight. The zero
/// pattern is exactly the set of residuals at or beyond the flat region.
pub fn robustness_weights(residuals: &[f64], rho: &RhoFunction, scale: f64) -> WeightVector {
    assert!(scale > 0.0, "robustness weights need a positive scale");
    let raw: Array1<f64> = residuals.iter().map(|r| rho.weight(r / scale)).collect();
    let nonzero = raw.iter().filter(|w| **w > 0.0).count();
    let total: f64 = raw.sum();
    let factor = if nonzero > 0 && total > 0.0 {
        nonzero as f64 / total
    } else {
        0.0
    };
    WeightVector {
        weights: raw * factor,
        source_scale: scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rho::{calibrate_cutoff, RhoKind};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn bisquare() -> RhoFunction {
        calibrate_cutoff(RhoKind::Bisquare, 0.5).unwrap()
    }

    #[test]
    fn zero_residuals_give_zero_scale() {
        let rho = bisquare();
        let s = m_scale(&[0.0; 8], &rho, &MScaleSpec::new(0.5)).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn constant_residuals_match_scalar_root() {
        // For r_i = k the equation collapses to rho_norm(k / sigma) = delta,
        // solved here by an independent scalar bisection.
        let rho = bisquare();
        let spec = MScaleSpec::new(0.3);
        let k = 2.5;
        let sigma = m_scale(&[k; 40], &rho, &spec).unwrap();
        let (mut lo, mut hi) = (1e-6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rho.rho_normalized(k / mid) > spec.delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(sigma, 0.5 * (lo + hi), epsilon = 1e-8);
    }

    #[test]
    fn degenerate_residuals_error() {
        let rho = bisquare();
        // 6 of 10 zero, delta = 0.5: at most 5 nonzero would be needed.
        let mut r = vec![0.0; 10];
        r[0] = 1.0;
        r[1] = -2.0;
        r[2] = 3.0;
        r[3] = 0.5;
        let err = m_scale(&r, &rho, &MScaleSpec::new(0.5)).unwrap_err();
        assert!(matches!(err, Error::DegenerateResiduals { .. }));
    }

    #[test]
    fn fixed_point_residual_and_equivariance() {
        let spec = MScaleSpec::new(0.5);
        let rho = bisquare();
        let mut rng = crate::seeding::rng_from(42);
        for _ in 0..200 {
            let n = rng.random_range(10..=200);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let sigma = m_scale(&r, &rho, &spec).unwrap();
            let mean_rho: f64 =
                r.iter().map(|x| rho.rho_normalized(x / sigma)).sum::<f64>() / n as f64;
            assert!((mean_rho - spec.delta).abs() < spec.tolerance);
            let c = rng.random_range(0.1..10.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let scaled: Vec<f64> = r.iter().map(|x| c * x).collect();
            let sigma_c = m_scale(&scaled, &rho, &spec).unwrap();
            assert!((sigma_c - c.abs() * sigma).abs() <= 1e-8 * sigma_c.max(1.0));
        }
    }

    #[test]
    fn monotone_in_absolute_residuals() {
        let spec = MScaleSpec::new(0.4);
        let rho = bisquare();
        let mut rng = crate::seeding::rng_from(9);
        for _ in 0..50 {
            let n = 60;
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sigma = m_scale(&r, &rho, &spec).unwrap();
            // Inflate magnitudes elementwise (strictly inside the active region).
            let r2: Vec<f64> = r
                .iter()
                .map(|x| (x.abs() + rng.random_range(0.0..0.3)) * 1.05)
                .collect();
            let sigma2 = m_scale(&r2, &rho, &spec).unwrap();
            assert!(sigma2 >= sigma - 1e-10);
        }
    }

    #[test]
    fn weights_zero_pattern_and_normalization() {
        let rho = bisquare();
        let scale = 1.0;
        let flat = rho.flat_radius();
        let r = vec![0.0, 0.2, -0.4, 10.0 * flat, 0.9 * flat];
        let wv = robustness_weights(&r, &rho, scale);
        assert_eq!(wv.weights[3], 0.0);
        assert!(wv.weights.iter().take(3).all(|w| *w > 0.0));
        assert!(wv.weights[4] > 0.0);
        // Mean over nonzero raw weights is 1.
        let nz: Vec<f64> = wv.weights.iter().copied().filter(|w| *w > 0.0).collect();
        let mean = nz.iter().sum::<f64>() / nz.len() as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);

        // All-zero residuals: every weight is exactly 1.
        let wv0 = robustness_weights(&[0.0; 5], &rho, 1.0);
        assert!(wv0.weights.iter().all(|w| (*w - 1.0).abs() < 1e-15));
    }

    #[test]
    fn weights_match_elementwise_oracle() {
        // Mixed residuals: weights equal an independently coded psi(x)/x
        // evaluation up to the common normalizer.
        let c = 1.9;
        let rho = RhoFunction::new(RhoKind::Bisquare, c).unwrap();
        let r = vec![0.3, -1.1, 0.01, 2.4, -0.8];
        let scale = 0.9;
        let wv = robustness_weights(&r, &rho, scale);
        let oracle: Vec<f64> = r
            .iter()
            .map(|&x| {
                let u = x / scale;
                if u == 0.0 {
                    1.0
                } else if (u / c).abs() >= 1.0 {
                    0.0
                } else {
                    (u * (1.0 - (u / c) * (u / c)).powi(2)) / u
                }
            })
            .collect();
        // Ratios to the oracle must be a single common constant.
        let ratio = wv.weights[0] / oracle[0];
        for i in 0..r.len() {
            assert_abs_diff_eq!(wv.weights[i], ratio * oracle[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_weight_cap_at_s_estimate_scale() {
        // With sigma solving the scale equation, at most floor(delta n)
        // observations can sit in the flat region.
        let spec = MScaleSpec::new(0.4);
        let rho = bisquare();
        let mut rng = crate::seeding::rng_from(4);
        for _ in 0..50 {
            let n = 100;
            let mut r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..30 {
                r[i] *= 500.0; // heavy contamination, below the breakdown cap
            }
            let sigma = m_scale(&r, &rho, &spec).unwrap();
            let wv = robustness_weights(&r, &rho, sigma);
            assert!(wv.zero_count() <= (spec.delta * n as f64).floor() as usize);
        }
    }
}
