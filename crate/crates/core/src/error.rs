//! Error types shared across the crate.

use thiserror::Error;

/// Errors surfaced by the numerical routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An iterative routine exhausted its iteration budget.
    #[error("{routine} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        routine: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The M-scale equation has no positive root for these residuals.
    #[error("degenerate residuals: {nonzero} nonzero of {n} cannot satisfy the scale equation at delta={delta}")]
    DegenerateResiduals { n: usize, nonzero: usize, delta: f64 },

    /// All observation weights are zero; the weighted problem is undefined.
    #[error("sum of observation weights is zero")]
    ZeroWeightSum,

    /// `lambda_max` is unbounded for a pure ridge penalty.
    #[error("lambda_max is not finite for alpha = 0; supply an explicit grid")]
    AlphaZero,

    /// Requested more folds than observations.
    #[error("cannot split {n} observations into {k} folds")]
    KTooLarge { n: usize, k: usize },

    /// A prediction-error metric was asked for an empty error vector.
    #[error("empty prediction-error vector")]
    EmptyErrors,

    /// Pearson similarity is undefined for a constant weight vector.
    #[error("weight vector has zero variance; similarity undefined")]
    ZeroVariance,

    /// Every cell of a CV outcome is the +inf sentinel.
    #[error("no finite prediction-error estimate to select from")]
    AllInfinite,

    /// Cutoff calibration failed to bracket a root.
    #[error("no cutoff in [{lo}, {hi}] attains breakdown {delta} for {kind}")]
    CalibrationBracket {
        kind: &'static str,
        delta: f64,
        lo: f64,
        hi: f64,
    },

    /// Invalid argument with an actionable message.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
