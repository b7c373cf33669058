//! The `report` stage: per-estimator aggregates over all realizations.

use std::collections::BTreeMap;

use bkt_core::eval::{aggregate, AggregateReport, RunResult};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::files;
use crate::AppError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub estimator: String,
    pub n_realizations: usize,
    pub mse: f64,
    pub model_accuracy: f64,
    pub mse_per_step: Vec<f64>,
    pub accuracy_per_step: Vec<f64>,
}

impl From<AggregateReport> for EstimatorReport {
    fn from(a: AggregateReport) -> Self {
        EstimatorReport {
            estimator: a.estimator,
            n_realizations: a.n_realizations,
            mse: a.mse,
            model_accuracy: a.model_accuracy,
            mse_per_step: a.mse_per_step,
            accuracy_per_step: a.accuracy_per_step,
        }
    }
}

/// Per-realization results of every estimator found on disk.
pub fn collect_results(cfg: &ExperimentConfig) -> Result<BTreeMap<String, Vec<RunResult>>, AppError> {
    let state_dim = crate::pipeline::bank_for(cfg)?.state_dim();
    let mut out: BTreeMap<String, Vec<RunResult>> = BTreeMap::new();
    for r in 0..cfg.n_realizations {
        let dir = cfg.realization_dir(r);
        let truth = files::read_truth(&dir, state_dim)?;
        let outputs = files::read_estimates(&dir)?;
        if outputs.is_empty() {
            return Err(AppError::MissingInput(format!("{}: no estimates", dir.display())));
        }
        for o in outputs {
            let result = RunResult::new(
                o.name.clone(),
                cfg.realization_seed(r),
                &truth.states,
                &o.states,
                &truth.model_seq,
                &o.models,
            )
            .map_err(|e| AppError::io(&dir, e))?;
            out.entry(o.name).or_default().push(result);
        }
    }
    for (name, runs) in &out {
        if runs.len() != cfg.n_realizations {
            return Err(AppError::MissingInput(format!(
                "estimator {name} has {} of {} realizations",
                runs.len(),
                cfg.n_realizations
            )));
        }
    }
    Ok(out)
}

pub fn build_report(cfg: &ExperimentConfig) -> Result<Vec<EstimatorReport>, AppError> {
    collect_results(cfg)?
        .values()
        .map(|runs| {
            aggregate(runs)
                .map(EstimatorReport::from)
                .map_err(|e| AppError::MissingInput(e.to_string()))
        })
        .collect()
}

/// Writes `report.json` and `report.csv` into the output directory.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Vec<EstimatorReport>, AppError> {
    let reports = build_report(cfg)?;
    let dir = &cfg.output_dir;
    files::write_json(&dir.join("report.json"), &reports)?;
    let path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| AppError::io(&path, e))?;
    let io = |e: csv::Error| AppError::io(&path, e);
    w.write_record(["k", "estimator", "mse", "model_accuracy"])
        .map_err(io)?;
    for rep in &reports {
        for (k, (m, a)) in rep.mse_per_step.iter().zip(&rep.accuracy_per_step).enumerate() {
            w.write_record([
                (k + 1).to_string(),
                rep.estimator.clone(),
                files::fmt_f64(*m),
                files::fmt_f64(*a),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| AppError::io(&path, e))?;
    Ok(reports)
}
