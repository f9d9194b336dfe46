//! Regression dataset container and robust standardization.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::mscale::median_sorted;

/// A design matrix with its response vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::invalid("dataset must contain at least one row"));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// y - b0 - X beta
    pub fn residuals(&self, intercept: f64, beta: &Array1<f64>) -> Array1<f64> {
        let mut r = self.y.clone();
        let fitted = self.x.dot(beta);
        r -= &fitted;
        r -= intercept;
        r
    }

    pub fn predict(&self, intercept: f64, beta: &Array1<f64>) -> Array1<f64> {
        self.x.dot(beta) + intercept
    }

    /// Dataset restricted to the given rows (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let p = self.p();
        let mut x = Array2::zeros((rows.len(), p));
        let mut y = Array1::zeros(rows.len());
        for (out, &i) in rows.iter().enumerate() {
            x.row_mut(out).assign(&self.x.row(i));
            y[out] = self.y[i];
        }
        Dataset { x, y }
    }
}

/// Median/MAD standardization record; inputs are assumed contaminated, so
/// location and spread are estimated robustly.
#[derive(Debug, Clone)]
pub struct RobustStandardization {
    pub centers: Array1<f64>,
    /// MAD / 0.6745 per column; 1 for constant columns (no-op).
    pub scales: Array1<f64>,
    pub y_center: f64,
}

impl RobustStandardization {
    /// Fits the standardization on a dataset.
    pub fn fit(data: &Dataset) -> Self {
        let p = data.p();
        let mut centers = Array1::zeros(p);
        let mut scales = Array1::ones(p);
        for j in 0..p {
            let col: Vec<f64> = data.x.column(j).to_vec();
            let (med, mad) = median_and_mad(&col);
            centers[j] = med;
            if mad > 0.0 {
                scales[j] = mad / 0.6745;
            }
        }
        let (y_center, _) = median_and_mad(data.y.as_slice().unwrap());
        RobustStandardization {
            centers,
            scales,
            y_center,
        }
    }

    /// Centered and scaled copy of a dataset.
    pub fn transform(&self, data: &Dataset) -> Dataset {
        let mut x = data.x.clone();
        for j in 0..data.p() {
            let mut col = x.column_mut(j);
            col -= self.centers[j];
            col /= self.scales[j];
        }
        let y = data.y.mapv(|v| v - self.y_center);
        Dataset { x, y }
    }

    /// Maps a fit on standardized data back to original units.
    pub fn back_coefficients(&self, intercept: f64, beta: &Array1<f64>) -> (f64, Array1<f64>) {
        let orig_beta = Array1::from_shape_fn(beta.len(), |j| beta[j] / self.scales[j]);
        let shift: f64 = (0..beta.len())
            .map(|j| beta[j] * self.centers[j] / self.scales[j])
            .sum();
        (self.y_center + intercept - shift, orig_beta)
    }
}

fn median_and_mad(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let med = median_sorted(&sorted);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(|a, b| a.total_cmp(b));
    (med, median_sorted(&dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn standardize_round_trip() {
        let mut rng = crate::seeding::rng_from(6);
        let n = 40;
        let p = 5;
        let x = Array2::from_shape_fn((n, p), |(_, j)| {
            rng.random_range(-1.0..1.0) * (j + 1) as f64 + j as f64
        });
        let y = Array1::from_shape_fn(n, |_| rng.random_range(-3.0..7.0));
        let data = Dataset::new(x, y).unwrap();
        let std = RobustStandardization::fit(&data);
        let transformed = std.transform(&data);

        // A fit in standardized units predicts identically after mapping back.
        let beta_std = Array1::from_shape_fn(p, |j| 0.3 * (j as f64 + 1.0));
        let intercept_std = 0.7;
        let pred_std = transformed.predict(intercept_std, &beta_std);
        let (b0, beta) = std.back_coefficients(intercept_std, &beta_std);
        let pred_orig = data.predict(b0, &beta);
        for i in 0..n {
            assert_abs_diff_eq!(pred_std[i] + std.y_center, pred_orig[i], epsilon = 1e-10);
        }

        // Standardized columns have zero median and unit MAD scale.
        for j in 0..p {
            let mut col: Vec<f64> = transformed.x.column(j).to_vec();
            col.sort_by(|a, b| a.total_cmp(b));
            assert!(crate::mscale::median_sorted(&col).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_columns_pass_through() {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| if j == 0 { 3.0 } else { i as f64 });
        let y = Array1::zeros(10);
        let data = Dataset::new(x, y).unwrap();
        let std = RobustStandardization::fit(&data);
        assert_eq!(std.scales[0], 1.0);
        let t = std.transform(&data);
        assert!(t.x.column(0).iter().all(|v| *v == 0.0));
    }
}
