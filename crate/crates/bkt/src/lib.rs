//! Experiment runner around `bkt-core`: configuration, result files and the
//! `simulate`, `track` and `report` stages.
//!
//! Each realization `r` lives in `<output_dir>/real_<rrrr>/`:
//!
//! | file | columns |
//! |------|---------|
//! | `states.csv` | `k, model, x1..xn, theta1..thetap` (row `k = 0` is the initial state) |
//! | `meas.csv` | `k, m, y1..yd` |
//! | `meta.json` | effective config, seed, bank description |
//! | `estimates.csv` | `k, estimator, x1..xn` |
//! | `models.csv` | `k, estimator, model` |
//! | `diagnostics.json` | sampler and filter diagnostics per estimator |
//! | `predictive.csv` | `k, y1..yd`, mean of `y_{k+1}` given `Y_{1..k}` (optional) |
//! | `samples.csv` | `k, draw, prev_model, model, x1..xn, theta1..thetap` (optional) |
//!
//! The output directory also receives `report.json` and `report.csv`
//! (`k, estimator, mse, model_accuracy`). Model ids are one-based labels and
//! floats are written with 17 significant digits.

pub mod config;
pub mod files;
pub mod pipeline;
pub mod report;

pub use config::{Estimator, ExperimentConfig, Overrides};

/// Failures with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("realization {realization} failed: {reason}")]
    Run { realization: usize, reason: String },
    #[error("missing input: {0}")]
    MissingInput(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io(_) => 3,
            AppError::Run { .. } => 4,
            AppError::MissingInput(_) => 5,
        }
    }

    pub(crate) fn from_config(e: bkt_core::Error) -> Self {
        AppError::Config(e.to_string())
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        AppError::Io(format!("{}: {e}", path.display()))
    }
}
