//! Benchmark data generation: heavy-tailed correlated covariates, SNR-scaled
//! errors, good leverage points and a three-signal contamination process.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cv::{metric_tau, DEFAULT_C_TAU};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seeding;

/// Error distribution of the clean model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Gaussian,
    Laplace,
    /// Symmetric alpha-stable with stability parameter 1.5.
    Stable15,
}

impl ErrorFamily {
    pub fn name(self) -> &'static str {
        match self {
            ErrorFamily::Gaussian => "gaussian",
            ErrorFamily::Laplace => "laplace",
            ErrorFamily::Stable15 => "stable_1_5",
        }
    }
}

/// Full configuration of the generator.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub error_family: ErrorFamily,
    pub snr: f64,
    pub leverage_fraction: f64,
    pub leverage_multiplier: f64,
    pub contamination_fraction: f64,
    /// Contamination signal coefficients, one per block.
    pub signal_values: [f64; 3],
    pub contamination_snr: f64,
    pub rng_seed: u64,
}

impl SimulationConfig {
    pub fn new(n: usize, p: usize, error_family: ErrorFamily, rng_seed: u64) -> Self {
        SimulationConfig {
            n,
            p,
            error_family,
            snr: 1.0,
            leverage_fraction: 0.2,
            leverage_multiplier: 8.0,
            contamination_fraction: 0.3,
            signal_values: [-1.5, -1.0, -0.5],
            contamination_snr: 10.0,
            rng_seed,
        }
    }

    /// Number of true nonzero coefficients: floor(log(n)).
    pub fn sparsity(&self) -> usize {
        (self.n as f64).ln().floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 || self.p < 2 {
            return Err(Error::invalid("simulation needs n >= 10 and p >= 2"));
        }
        if !(self.snr > 0.0 && self.contamination_snr > 0.0) {
            return Err(Error::invalid("signal-to-noise ratios must be positive"));
        }
        if !(0.0..0.5).contains(&self.contamination_fraction) {
            return Err(Error::invalid("contamination fraction must lie in [0, 0.5)"));
        }
        if !(0.0..=1.0).contains(&self.leverage_fraction)
            || self.leverage_fraction + self.contamination_fraction > 1.0
        {
            return Err(Error::invalid("leverage fraction out of range"));
        }
        let s = self.sparsity();
        if s + 2 > self.p {
            return Err(Error::invalid(format!(
                "p = {} leaves no room for {} signal and 2 noise columns",
                self.p, s
            )));
        }
        Ok(())
    }
}

/// Generated data with its ground truth and contamination bookkeeping.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub data: Dataset,
    pub beta_true: Array1<f64>,
    /// Three disjoint leading row blocks, one per contamination signal.
    pub contaminated_blocks: Vec<Vec<usize>>,
    pub leverage_rows: Vec<usize>,
    /// Union of the contaminated column sets of the three signals.
    pub contamination_columns: Vec<usize>,
    /// Per-signal contaminated column sets.
    pub contamination_column_sets: Vec<Vec<usize>>,
    /// Spread of the scaled noise, measured by the family-appropriate metric.
    pub true_error_scale: f64,
}

const AR1_CORRELATION: f64 = 0.5;

/// Clean draw: multivariate t(4) covariates with AR(1) correlation, errors
/// scaled so the signal-to-noise ratio matches the configuration.
pub fn gen_clean(config: &SimulationConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let n = config.n;
    let p = config.p;
    let s = config.sparsity();

    let mut x_rng = seeding::rng_from(seeding::child_seed(config.rng_seed, 1));
    let mut noise_rng = seeding::rng_from(seeding::child_seed(config.rng_seed, 2));

    // Gaussian AR(1) core via the autoregressive recursion, then one
    // chi-square(4) mixing variable per row for the multivariate t.
    let rho = AR1_CORRELATION;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        let mut prev: f64 = StandardNormal.sample(&mut x_rng);
        x[[i, 0]] = prev;
        for j in 1..p {
            let z: f64 = StandardNormal.sample(&mut x_rng);
            prev = rho * prev + innovation * z;
            x[[i, j]] = prev;
        }
        let chi: f64 = (0..4)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut x_rng);
                z * z
            })
            .sum();
        let mix = (chi / 4.0).sqrt();
        for j in 0..p {
            x[[i, j]] /= mix;
        }
    }

    let beta_true = Array1::from_shape_fn(p, |j| if j < s { 1.0 } else { 0.0 });
    let signal = x.dot(&beta_true);

    let raw_noise: Vec<f64> = (0..n)
        .map(|_| sample_standard_error(config.error_family, &mut noise_rng))
        .collect();
    let signal_sd = sample_sd(signal.as_slice().unwrap());
    let noise_spread = error_spread(config.error_family, &raw_noise);
    let scale = signal_sd / (config.snr.sqrt() * noise_spread);
    let y = Array1::from_shape_fn(n, |i| signal[i] + scale * raw_noise[i]);

    Ok(SimulatedDataset {
        data: Dataset::new(x, y)?,
        beta_true,
        contaminated_blocks: vec![Vec::new(), Vec::new(), Vec::new()],
        leverage_rows: Vec::new(),
        contamination_columns: Vec::new(),
        contamination_column_sets: Vec::new(),
        true_error_scale: scale * noise_spread,
    })
}

/// Good leverage points: for a random fraction of the non-contaminated rows,
/// the largest covariate magnitudes among the zero-coefficient columns are
/// inflated. Responses are untouched.
pub fn apply_leverage(mut ds: SimulatedDataset, config: &SimulationConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let n = config.n;
    let p = config.p;
    let s = config.sparsity();
    let count = (config.leverage_fraction * n as f64).floor() as usize;
    if count == 0 {
        return Ok(ds);
    }
    // Contamination will occupy a leading block of rows; leverage rows are
    // drawn from the remainder.
    let block = contamination_block_size(config);
    let eligible: Vec<usize> = (3 * block..n).collect();
    if count > eligible.len() {
        return Err(Error::invalid("leverage fraction leaves too few clean rows"));
    }
    let mut rng = seeding::rng_from(seeding::child_seed(config.rng_seed, 3));
    let mut rows: Vec<usize> = sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    rows.sort_unstable();

    let inflate = (p - s) / 2;
    for &i in &rows {
        // Zero-coefficient columns ranked by |x_ij|, largest first.
        let mut order: Vec<usize> = (s..p).collect();
        order.sort_by(|&a, &b| ds.data.x[[i, b]].abs().total_cmp(&ds.data.x[[i, a]].abs()));
        for &j in order.iter().take(inflate) {
            ds.data.x[[i, j]] *= config.leverage_multiplier;
        }
    }
    ds.leverage_rows = rows;
    Ok(ds)
}

fn contamination_block_size(config: &SimulationConfig) -> usize {
    ((config.contamination_fraction * config.n as f64).floor() as usize) / 3
}

/// Three contamination signals on disjoint leading row blocks: each picks a
/// fresh set of noise columns, inflates them until the rows are at least twice
/// as far from the center (Mahalanobis distance under the population AR(1)
/// covariance) as any clean row, and regenerates the responses from its own
/// coefficient signal at the contamination SNR.
pub fn apply_contamination(
    mut ds: SimulatedDataset,
    config: &SimulationConfig,
) -> Result<SimulatedDataset> {
    config.validate()?;
    let n = config.n;
    let p = config.p;
    let s = config.sparsity();
    let block = contamination_block_size(config);
    if block == 0 {
        return Ok(ds);
    }
    let col_count = (p as f64).log2().floor() as usize;
    if col_count == 0 || s + col_count > p {
        return Err(Error::invalid("not enough noise columns for contamination"));
    }

    // Distance threshold from the rows that stay clean.
    let max_clean = (3 * block..n)
        .map(|i| mahalanobis_ar1(ds.data.x.row(i).as_slice().unwrap()))
        .fold(0.0_f64, f64::max);
    let target = 2.0 * max_clean;

    let mut rng = seeding::rng_from(seeding::child_seed(config.rng_seed, 4));
    let mut all_columns: Vec<usize> = Vec::new();
    let mut column_sets = Vec::with_capacity(3);
    let mut blocks = Vec::with_capacity(3);
    for (l, &u) in config.signal_values.iter().enumerate() {
        let rows: Vec<usize> = (l * block..(l + 1) * block).collect();
        // Fresh column set among the zero-coefficient covariates.
        let columns: Vec<usize> = sample(&mut rng, p - s, col_count)
            .into_iter()
            .map(|j| j + s)
            .collect();

        // Smallest multiplier pushing every row in the block past the target.
        let mut k_l = 1.0_f64;
        for &i in &rows {
            let row = ds.data.x.row(i);
            let full = row.as_slice().unwrap();
            let mut masked = vec![0.0; p];
            for &j in &columns {
                masked[j] = row[j];
            }
            k_l = k_l.max(1.0 + multiplier_excess(full, &masked, target));
        }

        for &i in &rows {
            for &j in &columns {
                ds.data.x[[i, j]] *= k_l;
            }
        }

        // Contamination model: beta* = u on the selected columns.
        let mut beta_star = Array1::zeros(p);
        for &j in &columns {
            beta_star[j] = u;
        }
        let signal: Vec<f64> = rows
            .iter()
            .map(|&i| ds.data.x.row(i).dot(&beta_star))
            .collect();
        let noise_sd = sample_sd(&signal) / config.contamination_snr.sqrt();
        for (pos, &i) in rows.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            ds.data.y[i] = signal[pos] + noise_sd * z;
        }

        all_columns.extend_from_slice(&columns);
        column_sets.push(columns);
        blocks.push(rows);
    }
    all_columns.sort_unstable();
    all_columns.dedup();
    ds.contaminated_blocks = blocks;
    ds.contamination_columns = all_columns;
    ds.contamination_column_sets = column_sets;
    Ok(ds)
}

/// Clean draw, leverage, contamination, in the paper's order.
pub fn generate(config: &SimulationConfig) -> Result<SimulatedDataset> {
    let ds = gen_clean(config)?;
    let ds = apply_leverage(ds, config)?;
    apply_contamination(ds, config)
}

/// Independent clean evaluation draw from the same covariate process, with
/// responses from the given coefficients and errors matched to a target
/// spread. Used to measure the true prediction accuracy of fitted models.
pub fn gen_test_draw(
    beta: &Array1<f64>,
    family: ErrorFamily,
    error_scale: f64,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let p = beta.len();
    if p == 0 || n == 0 {
        return Err(Error::invalid("test draw needs coefficients and rows"));
    }
    let mut x_rng = seeding::rng_from(seeding::child_seed(seed, 11));
    let mut noise_rng = seeding::rng_from(seeding::child_seed(seed, 12));
    let rho = AR1_CORRELATION;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        let mut prev: f64 = StandardNormal.sample(&mut x_rng);
        x[[i, 0]] = prev;
        for j in 1..p {
            let z: f64 = StandardNormal.sample(&mut x_rng);
            prev = rho * prev + innovation * z;
            x[[i, j]] = prev;
        }
        let chi: f64 = (0..4)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut x_rng);
                z * z
            })
            .sum();
        let mix = (chi / 4.0).sqrt();
        for j in 0..p {
            x[[i, j]] /= mix;
        }
    }
    let raw_noise: Vec<f64> = (0..n)
        .map(|_| sample_standard_error(family, &mut noise_rng))
        .collect();
    let spread = error_spread(family, &raw_noise);
    let c = error_scale / spread;
    let signal = x.dot(beta);
    let y = Array1::from_shape_fn(n, |i| signal[i] + c * raw_noise[i]);
    Dataset::new(x, y)
}

/// Mahalanobis distance under the AR(1)(0.5) population covariance, using its
/// analytic tridiagonal inverse.
pub fn mahalanobis_ar1(v: &[f64]) -> f64 {
    quad_form_ar1(v, v).sqrt()
}

/// Bilinear form u' Sigma^{-1} v for the AR(1)(0.5) covariance.
fn quad_form_ar1(u: &[f64], v: &[f64]) -> f64 {
    let rho = AR1_CORRELATION;
    let p = u.len();
    if p == 1 {
        return u[0] * v[0];
    }
    let mut acc = u[0] * v[0] + u[p - 1] * v[p - 1];
    for i in 1..p - 1 {
        acc += (1.0 + rho * rho) * u[i] * v[i];
    }
    for i in 0..p - 1 {
        acc -= rho * (u[i] * v[i + 1] + u[i + 1] * v[i]);
    }
    acc / (1.0 - rho * rho)
}

/// Smallest t >= 0 such that the Mahalanobis distance of `u + t * masked`
/// reaches `target`; 0 when already beyond it.
fn multiplier_excess(u: &[f64], masked: &[f64], target: f64) -> f64 {
    let quu = quad_form_ar1(u, u);
    let quv = quad_form_ar1(u, masked);
    let qvv = quad_form_ar1(masked, masked);
    if qvv <= 0.0 {
        return 0.0;
    }
    let c = quu - target * target;
    let disc = quv * quv - qvv * c;
    if disc <= 0.0 {
        return 0.0;
    }
    ((-quv + disc.sqrt()) / qvv).max(0.0)
}

/// One draw from the standardized error family.
fn sample_standard_error(family: ErrorFamily, rng: &mut impl Rng) -> f64 {
    match family {
        ErrorFamily::Gaussian => StandardNormal.sample(rng),
        ErrorFamily::Laplace => {
            let u: f64 = rng.random_range(-0.5..0.5);
            -u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
        ErrorFamily::Stable15 => sample_symmetric_stable(1.5, rng),
    }
}

/// Chambers-Mallows-Stuck draw from the symmetric alpha-stable law.
fn sample_symmetric_stable(alpha: f64, rng: &mut impl Rng) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let v: f64 = rng.random_range(-half_pi..half_pi);
    let w: f64 = -rng.random_range(0.0_f64..1.0).max(f64::MIN_POSITIVE).ln();
    let num = (alpha * v).sin();
    let den = v.cos().powf(1.0 / alpha);
    let tail = ((1.0 - alpha) * v).cos() / w;
    num / den * tail.powf((1.0 - alpha) / alpha)
}

/// Family-appropriate spread: empirical standard deviation for Gaussian
/// errors, tau-size otherwise.
fn error_spread(family: ErrorFamily, values: &[f64]) -> f64 {
    match family {
        ErrorFamily::Gaussian => sample_sd(values),
        _ => metric_tau(values, DEFAULT_C_TAU).expect("non-empty"),
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(n: usize, p: usize, family: ErrorFamily, seed: u64) -> SimulationConfig {
        SimulationConfig::new(n, p, family, seed)
    }

    #[test]
    fn deterministic_per_seed() {
        let config = base_config(100, 50, ErrorFamily::Stable15, 99);
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.data.y, b.data.y);
        assert_eq!(a.data.x, b.data.x);
        assert_eq!(a.leverage_rows, b.leverage_rows);
        assert_eq!(a.contamination_columns, b.contamination_columns);
        assert_eq!(a.true_error_scale.to_bits(), b.true_error_scale.to_bits());
    }

    #[test]
    fn contamination_bookkeeping() {
        let config = base_config(100, 50, ErrorFamily::Gaussian, 5);
        let ds = generate(&config).unwrap();
        let s = config.sparsity();
        assert_eq!(s, 4);
        // Three disjoint leading blocks of floor(0.1 n).
        for (l, block) in ds.contaminated_blocks.iter().enumerate() {
            assert_eq!(block.len(), 10);
            assert_eq!(block[0], l * 10);
            assert_eq!(*block.last().unwrap(), l * 10 + 9);
        }
        // floor(log2 50) = 5 columns per signal, never among the signal columns.
        assert!(ds.contamination_columns.len() >= 5);
        assert!(ds.contamination_columns.iter().all(|&j| j >= s));
        // Leverage rows avoid the contaminated block.
        assert_eq!(ds.leverage_rows.len(), 20);
        assert!(ds.leverage_rows.iter().all(|&i| i >= 30));
    }

    #[test]
    fn leverage_touches_only_noise_columns() {
        let config = SimulationConfig {
            contamination_fraction: 0.0,
            ..base_config(80, 20, ErrorFamily::Gaussian, 11)
        };
        let clean = gen_clean(&config).unwrap();
        let lev = apply_leverage(clean.clone(), &config).unwrap();
        let s = config.sparsity();
        assert_eq!(lev.leverage_rows.len(), 16);
        // Responses and signal columns are untouched.
        assert_eq!(clean.data.y, lev.data.y);
        for i in 0..80 {
            for j in 0..s {
                assert_eq!(clean.data.x[[i, j]], lev.data.x[[i, j]]);
            }
        }
        // Exactly (p - s) / 2 entries per leverage row scaled by exactly 8.
        for &i in &lev.leverage_rows {
            let mut changed = 0;
            for j in s..20 {
                let (a, b) = (clean.data.x[[i, j]], lev.data.x[[i, j]]);
                if a != b {
                    assert!((b / a - config.leverage_multiplier).abs() < 1e-12);
                    changed += 1;
                }
            }
            assert_eq!(changed, (20 - s) / 2);
        }
        // Non-leverage rows identical.
        for i in 0..80 {
            if !lev.leverage_rows.contains(&i) {
                for j in 0..20 {
                    assert_eq!(clean.data.x[[i, j]], lev.data.x[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn contaminated_rows_are_outlying() {
        let config = base_config(100, 50, ErrorFamily::Laplace, 21);
        let ds = generate(&config).unwrap();
        let max_clean = (30..100)
            .map(|i| mahalanobis_ar1(ds.data.x.row(i).as_slice().unwrap()))
            .fold(0.0_f64, f64::max);
        for block in &ds.contaminated_blocks {
            for &i in block {
                let d = mahalanobis_ar1(ds.data.x.row(i).as_slice().unwrap());
                assert!(
                    d >= 2.0 * max_clean - 1e-9,
                    "row {i}: distance {d} below 2 x {max_clean}"
                );
            }
        }
    }

    #[test]
    fn ar1_column_correlation() {
        // Adjacent-column correlation of the t(4) covariates is the AR(1)
        // parameter (correlation survives the scale mixing).
        let config = base_config(100_000, 15, ErrorFamily::Gaussian, 31);
        let ds = gen_clean(&config).unwrap();
        for j in 0..4 {
            let a: Vec<f64> = ds.data.x.column(j).to_vec();
            let b: Vec<f64> = ds.data.x.column(j + 1).to_vec();
            let r = crate::cv::weight_similarity(&a, &b).unwrap();
            assert!((r - 0.5).abs() < 0.02, "columns {j},{} correlate at {r}", j + 1);
        }
    }

    #[test]
    fn snr_calibration_gaussian() {
        let config = base_config(100_000, 15, ErrorFamily::Gaussian, 41);
        let ds = gen_clean(&config).unwrap();
        let signal = ds.data.x.dot(&ds.beta_true);
        let noise: Vec<f64> = (0..config.n).map(|i| ds.data.y[i] - signal[i]).collect();
        let ratio = sample_sd(signal.as_slice().unwrap()) / sample_sd(&noise);
        assert!((ratio - 1.0).abs() < 0.05, "sd ratio {ratio}");
    }

    #[test]
    fn snr_calibration_tau_families() {
        for family in [ErrorFamily::Laplace, ErrorFamily::Stable15] {
            let config = base_config(100_000, 15, family, 43);
            let ds = gen_clean(&config).unwrap();
            let signal = ds.data.x.dot(&ds.beta_true);
            let noise: Vec<f64> = (0..config.n).map(|i| ds.data.y[i] - signal[i]).collect();
            let ratio =
                sample_sd(signal.as_slice().unwrap()) / metric_tau(&noise, DEFAULT_C_TAU).unwrap();
            assert!((ratio - 1.0).abs() < 0.05, "{family:?}: spread ratio {ratio}");
            assert!(
                (ds.true_error_scale - metric_tau(&noise, DEFAULT_C_TAU).unwrap()).abs()
                    < 0.05 * ds.true_error_scale
            );
        }
    }

    #[test]
    fn stable_sampler_distributional_checks() {
        let mut rng = crate::seeding::rng_from(53);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_symmetric_stable(1.5, &mut rng))
            .collect();
        draws.sort_by(|a, b| a.total_cmp(b));
        // Symmetric about zero.
        let median = crate::mscale::median_sorted(&draws);
        assert!(median.abs() < 0.02, "median {median}");
        // Hill estimator of the tail index over the top 1000 magnitudes.
        let mut abs: Vec<f64> = draws.iter().map(|d| d.abs()).collect();
        abs.sort_by(|a, b| b.total_cmp(a));
        let k = 1000;
        let hill: f64 =
            (0..k).map(|i| (abs[i] / abs[k]).ln()).sum::<f64>() / k as f64;
        let tail_index = 1.0 / hill;
        assert!(
            (1.3..=1.7).contains(&tail_index),
            "Hill tail index {tail_index}"
        );
    }

    #[test]
    fn contaminated_blocks_recover_their_signal() {
        // Regressing the contaminated responses on the contaminated columns
        // recovers the block's signal value at the contamination SNR.
        let config = SimulationConfig {
            contamination_fraction: 0.3,
            leverage_fraction: 0.0,
            ..base_config(3000, 16, ErrorFamily::Gaussian, 61)
        };
        let clean = gen_clean(&config).unwrap();
        let ds = apply_contamination(clean, &config).unwrap();
        for (l, block) in ds.contaminated_blocks.iter().enumerate() {
            let u = config.signal_values[l];
            // Least squares of y on the block's aggregated signal direction:
            // the slope recovers the signal value at SNR 10.
            let cols = &ds.contamination_column_sets[l];
            let z: Vec<f64> = block
                .iter()
                .map(|&i| cols.iter().map(|&j| ds.data.x[[i, j]]).sum::<f64>())
                .collect();
            let y: Vec<f64> = block.iter().map(|&i| ds.data.y[i]).collect();
            let zm = z.iter().sum::<f64>() / z.len() as f64;
            let ym = y.iter().sum::<f64>() / y.len() as f64;
            let cov: f64 = z.iter().zip(&y).map(|(a, b)| (a - zm) * (b - ym)).sum();
            let var: f64 = z.iter().map(|a| (a - zm) * (a - zm)).sum();
            let slope = cov / var;
            assert!(
                (slope - u).abs() < 0.25 * u.abs(),
                "block {l}: slope {slope} vs signal value {u}"
            );
        }
    }
}
