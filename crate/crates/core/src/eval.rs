//! Error metrics and Monte Carlo aggregation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{ModelId, StateVec};

/// Squared Euclidean distance between two states.
pub fn squared_error(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::dim("state estimate", truth.len(), estimate.len()));
    }
    Ok(truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `(1/N) sum_i |x_i - x_hat_i|^2`.
pub fn mse(truth: &[StateVec], estimates: &[StateVec]) -> Result<f64> {
    if truth.len() != estimates.len() {
        return Err(Error::dim("estimate sequence", truth.len(), estimates.len()));
    }
    if truth.is_empty() {
        return Err(Error::Config("mse of an empty sequence".into()));
    }
    let mut total = 0.0;
    for (t, e) in truth.iter().zip(estimates) {
        total += squared_error(t, e)?;
    }
    Ok(total / truth.len() as f64)
}

/// Fraction of steps whose estimated model equals the true one.
pub fn model_accuracy(truth: &[ModelId], estimates: &[ModelId]) -> Result<f64> {
    if truth.len() != estimates.len() {
        return Err(Error::dim("model sequence", truth.len(), estimates.len()));
    }
    if truth.is_empty() {
        return Err(Error::Config("accuracy of an empty sequence".into()));
    }
    let hits = truth.iter().zip(estimates).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// One estimator on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub estimator: String,
    pub per_step_sq_error: Vec<f64>,
    pub model_correct: Vec<bool>,
    pub seed: u64,
}

impl RunResult {
    pub fn new(
        estimator: impl Into<String>,
        seed: u64,
        truth: &[StateVec],
        estimates: &[StateVec],
        true_models: &[ModelId],
        estimated_models: &[ModelId],
    ) -> Result<Self> {
        if truth.len() != estimates.len() {
            return Err(Error::dim("estimate sequence", truth.len(), estimates.len()));
        }
        if true_models.len() != truth.len() || estimated_models.len() != truth.len() {
            return Err(Error::dim("model sequence", truth.len(), estimated_models.len()));
        }
        let per_step_sq_error = truth
            .iter()
            .zip(estimates)
            .map(|(t, e)| squared_error(t, e))
            .collect::<Result<Vec<_>>>()?;
        let model_correct = true_models
            .iter()
            .zip(estimated_models)
            .map(|(a, b)| a == b)
            .collect();
        Ok(RunResult {
            estimator: estimator.into(),
            per_step_sq_error,
            model_correct,
            seed,
        })
    }

    pub fn horizon(&self) -> usize {
        self.per_step_sq_error.len()
    }

    pub fn mse(&self) -> f64 {
        self.per_step_sq_error.iter().sum::<f64>() / self.horizon() as f64
    }

    pub fn model_accuracy(&self) -> f64 {
        self.model_correct.iter().filter(|c| **c).count() as f64 / self.horizon() as f64
    }
}

/// Averages over realizations and steps, with per-step curves.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub estimator: String,
    pub mse: f64,
    pub mse_per_step: Vec<f64>,
    pub model_accuracy: f64,
    pub accuracy_per_step: Vec<f64>,
    pub n_realizations: usize,
}

impl AggregateReport {
    pub fn horizon(&self) -> usize {
        self.mse_per_step.len()
    }

    /// Report over the union of both realization sets.
    pub fn combine(&self, other: &AggregateReport) -> Result<AggregateReport> {
        if self.horizon() != other.horizon() {
            return Err(Error::dim("report horizon", self.horizon(), other.horizon()));
        }
        let (na, nb) = (self.n_realizations as f64, other.n_realizations as f64);
        let n = na + nb;
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| (na * x + nb * y) / n).collect()
        };
        let mse_per_step = mix(&self.mse_per_step, &other.mse_per_step);
        let accuracy_per_step = mix(&self.accuracy_per_step, &other.accuracy_per_step);
        Ok(AggregateReport {
            estimator: self.estimator.clone(),
            mse: mean(&mse_per_step),
            model_accuracy: mean(&accuracy_per_step),
            mse_per_step,
            accuracy_per_step,
            n_realizations: self.n_realizations + other.n_realizations,
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Aggregates results of one estimator. The scalar MSE averages over both
/// steps and realizations.
pub fn aggregate(results: &[RunResult]) -> Result<AggregateReport> {
    let first = results
        .first()
        .ok_or_else(|| Error::Config("nothing to aggregate".into()))?;
    let k = first.horizon();
    if k == 0 {
        return Err(Error::Config("results have no steps".into()));
    }
    let mut sq = vec![0.0; k];
    let mut hits = vec![0.0; k];
    for r in results {
        if r.horizon() != k || r.model_correct.len() != k {
            return Err(Error::dim("result horizon", k, r.horizon()));
        }
        for i in 0..k {
            sq[i] += r.per_step_sq_error[i];
            hits[i] += r.model_correct[i] as u8 as f64;
        }
    }
    let n = results.len() as f64;
    let mse_per_step: Vec<f64> = sq.iter().map(|v| v / n).collect();
    let accuracy_per_step: Vec<f64> = hits.iter().map(|v| v / n).collect();
    Ok(AggregateReport {
        estimator: first.estimator.clone(),
        mse: mean(&mse_per_step),
        model_accuracy: mean(&accuracy_per_step),
        mse_per_step,
        accuracy_per_step,
        n_realizations: results.len(),
    })
}
