//! Elastic-net penalized robust regression with multi-minimum path tracking
//! and information-sharing cross-validation.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`rho`] / [`mscale`] — bounded loss families, the M-scale equation and
//!    robustness weights;
//! 2. [`enet`] — the weighted elastic-net inner solver;
//! 3. [`optimizer`] — IRWLS local optimization of the penalized S- and M-loss,
//!    starting-point generation and the per-lambda minima registry;
//! 4. [`cv`] — naive K-fold cross-validation with robust metrics, and the
//!    information-sharing engine that warm-starts fold fits from the full-data
//!    minima, matches fold minima by weight similarity and scores each
//!    full-data minimum by a weighted held-out RMSPE;
//! 5. [`simulate`] — the contaminated heavy-tailed benchmark generator;
//! 6. [`diagnostics`] — univariate minima enumeration and discontinuity
//!    detection for regularization paths and CV curves.

pub mod cv;
pub mod dataset;
pub mod diagnostics;
pub mod enet;
pub mod error;
mod linalg;
pub mod mscale;
pub mod optimizer;
pub mod rho;
pub mod seeding;
pub mod simulate;

pub use dataset::Dataset;
pub use error::{Error, Result};
