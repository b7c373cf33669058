//! The `simulate` and `track` stages, run per realization.

use std::path::Path;

use bkt_core::baseline::{ekf_bank_track, kf_bank_track, BankTrack, KalmanModel};
use bkt_core::inference::{posterior_predictive, run_chain, PosteriorSummary};
use bkt_core::linalg::{cholesky, sample_mvn};
use bkt_core::rng::{child_rng, stream};
use bkt_core::scenario::{build_bank, initial_cov, simulate, Experiment, ScenarioConfig, ScenarioTruth};
use bkt_core::ModelBank;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Estimator, ExperimentConfig};
use crate::files::{self, EstimatorOutput};
use crate::AppError;

/// Runs `f` for every realization on `cfg.workers` threads. The first
/// failure by realization index wins.
pub fn for_each_realization<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>, AppError>
where
    T: Send,
    F: Fn(usize) -> Result<T, AppError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| AppError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let results: Vec<Result<T, AppError>> =
        pool.install(|| (0..cfg.n_realizations).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

fn run_error(r: usize) -> impl Fn(bkt_core::Error) -> AppError {
    move |e| AppError::Run {
        realization: r,
        reason: e.to_string(),
    }
}

pub(crate) fn bank_for(cfg: &ExperimentConfig) -> Result<ModelBank, AppError> {
    build_bank(&cfg.scenario_for(0)?).map_err(AppError::from_config)
}

fn meta(cfg: &ExperimentConfig, r: usize, bank: &ModelBank, truth: &ScenarioTruth) -> Value {
    json!({
        "realization": r,
        "seed": cfg.realization_seed(r),
        "config": cfg,
        "bank": bank.description(),
        "initial_model": truth.initial_model.label(),
        "initial_state": truth.initial_state.as_slice(),
    })
}

/// Simulates realization `r` and writes `states.csv`, `meas.csv` and
/// `meta.json`.
pub fn simulate_realization(cfg: &ExperimentConfig, r: usize) -> Result<ScenarioTruth, AppError> {
    let bank = bank_for(cfg)?;
    let sc = cfg.scenario_for(r)?;
    let truth = simulate(&bank, &sc).map_err(run_error(r))?;
    let dir = cfg.realization_dir(r);
    std::fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
    files::write_truth(&dir, &truth)?;
    files::write_json(&dir.join("meta.json"), &meta(cfg, r, &bank, &truth))?;
    Ok(truth)
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<(), AppError> {
    for_each_realization(cfg, |r| simulate_realization(cfg, r).map(|_| ()))?;
    Ok(())
}

/// Simulated data of realization `r`, reusing files written for the same
/// scenario and seed.
fn load_or_simulate(cfg: &ExperimentConfig, r: usize, bank: &ModelBank) -> Result<ScenarioTruth, AppError> {
    let dir = cfg.realization_dir(r);
    let current = json!({ "seed": cfg.realization_seed(r), "scenario": cfg.scenario });
    let stored = std::fs::read_to_string(dir.join("meta.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .map(|m| json!({ "seed": m["seed"], "scenario": m["config"]["scenario"] }));
    if stored.as_ref() == Some(&current) {
        if let Ok(truth) = files::read_truth(&dir, bank.state_dim()) {
            return Ok(truth);
        }
    }
    simulate_realization(cfg, r)
}

/// Prior handed to every estimator: the true initial state shifted by one
/// draw from the baseline stream, with the scenario's initial covariance.
/// The shift is `N(0, I)` for the linear scenario and `N(0, P0)` for the
/// turn scenario, whose turn-rate coordinate is in rad/s.
pub fn initial_prior(
    sc: &ScenarioConfig,
    truth: &ScenarioTruth,
) -> Result<(Vec<f64>, DMatrix<f64>), bkt_core::Error> {
    let p0 = initial_cov(sc)?;
    let n = p0.nrows();
    let spread = match sc.experiment {
        Experiment::Exp1Linear => DMatrix::identity(n, n),
        Experiment::Exp2Turn => p0.clone(),
    };
    let l = cholesky(&spread, "initial spread")?;
    let mut rng = child_rng(sc.seed, &[stream::BASELINE]);
    let x0 = sample_mvn(&mut rng, &truth.initial_state, &l);
    Ok((x0, p0))
}

/// Runs the Kalman-bank proxy: exact Kalman filters for the linear
/// scenario, extended ones otherwise.
pub fn run_kalman_bank(
    experiment: Experiment,
    bank: &ModelBank,
    x0: &[f64],
    p0: &DMatrix<f64>,
    truth: &ScenarioTruth,
) -> Result<(String, BankTrack), bkt_core::Error> {
    match experiment {
        Experiment::Exp1Linear => {
            let models = bank
                .models()
                .map(|j| KalmanModel::from_bank(bank, j, x0.to_vec(), p0.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(("kf_bank".into(), kf_bank_track(&models, &truth.measurements)?))
        }
        Experiment::Exp2Turn => Ok((
            "ekf_bank".into(),
            ekf_bank_track(bank, x0, p0, &truth.measurements)?,
        )),
    }
}

fn tracker_diagnostics(s: &PosteriorSummary) -> Value {
    json!({
        "overall_acceptance": s.overall_acceptance(),
        "min_ess": s.min_ess(),
        "acceptance_rate": s.acceptance_rate,
        "step_size": s.step_sizes,
        "ess": s.ess,
        "state_sd": s.state_sd,
        "param_mean": s.param_mean,
        "model_marginals": s.model_marginals,
        "cluster_counts": s.cluster_counts,
        "warnings": s.warnings,
    })
}

/// Runs the configured estimators on realization `r` and writes
/// `estimates.csv`, `models.csv`, `diagnostics.json` and, when asked,
/// `predictive.csv` and `samples.csv`.
pub fn track_realization(cfg: &ExperimentConfig, r: usize) -> Result<(), AppError> {
    let bank = bank_for(cfg)?;
    let sc = cfg.scenario_for(r)?;
    let truth = load_or_simulate(cfg, r, &bank)?;
    let (x0, p0) = initial_prior(&sc, &truth).map_err(run_error(r))?;
    let dir = cfg.realization_dir(r);

    let mut outputs = Vec::new();
    let mut diagnostics = serde_json::Map::new();
    let mut estimators = cfg.estimators.clone();
    estimators.sort();
    estimators.dedup();
    for est in estimators {
        match est {
            Estimator::Bkt => {
                let summary = run_chain(&truth.measurements, &bank, &cfg.sampler_for(r), &x0, &p0)
                    .map_err(run_error(r))?;
                if let Some(samples) = &summary.samples {
                    let means = samples
                        .iter()
                        .map(|s| posterior_predictive(&bank, s).map(|p| p.mean()))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(run_error(r))?;
                    files::write_predictive(&dir, &means)?;
                    files::write_samples(&dir, samples)?;
                }
                diagnostics.insert(est.name().into(), tracker_diagnostics(&summary));
                outputs.push(EstimatorOutput {
                    name: est.name().into(),
                    states: summary.state_mean,
                    models: summary.model_map,
                });
            }
            Estimator::KfBank => {
                let (name, track) =
                    run_kalman_bank(sc.experiment, &bank, &x0, &p0, &truth).map_err(run_error(r))?;
                let models = track.model_map();
                diagnostics.insert(
                    name.clone(),
                    json!({
                        "weights": track.weights,
                        "loglik": track.tracks.iter().map(|t| &t.loglik).collect::<Vec<_>>(),
                    }),
                );
                outputs.push(EstimatorOutput {
                    name,
                    states: track.estimates,
                    models,
                });
            }
        }
    }
    files::write_estimates(&dir, &outputs)?;
    files::write_json(&dir.join("diagnostics.json"), &Value::Object(diagnostics))
}

pub fn cmd_track(cfg: &ExperimentConfig) -> Result<(), AppError> {
    for_each_realization(cfg, |r| track_realization(cfg, r))?;
    Ok(())
}

/// Whether `dir` holds tracker output.
pub fn has_estimates(dir: &Path) -> bool {
    dir.join("estimates.csv").exists() && dir.join("models.csv").exists()
}
