//! Experiment configuration read from TOML.
//!
//! ```toml
//! n_realizations = 4
//! output_dir = "runs/exp1"
//! estimators = ["bkt", "kf_bank"]
//!
//! [scenario]
//! experiment = "exp1_linear"
//! horizon = 100
//! measurements_per_step = 20
//! seed = 0
//!
//! [scenario.overrides]
//! alpha = 0.01
//!
//! [sampler]
//! n_iterations = 2000
//! burn_in = 500
//! ```
//!
//! Every key except `scenario.experiment` has a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bkt_core::inference::SamplerConfig;
use bkt_core::scenario::{Experiment, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// The sequential HMC-within-Gibbs tracker.
    Bkt,
    /// Per-model Kalman filters mixed by likelihood (EKFs for nonlinear
    /// banks).
    KfBank,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Bkt => "bkt",
            Estimator::KfBank => "kf_bank",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub experiment: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "one")]
    pub measurements_per_step: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub mass: Option<Vec<f64>>,
    pub adapt: bool,
    pub target_accept: f64,
    pub step_jitter: f64,
    pub learn_transition: bool,
    pub learn_measurement: bool,
    pub cluster_candidates: Vec<usize>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            n_iterations: d.n_iterations,
            burn_in: d.burn_in,
            step_size: d.step_size,
            leapfrog_steps: d.leapfrog_steps,
            mass: d.mass,
            adapt: d.adapt,
            target_accept: d.target_accept,
            step_jitter: d.step_jitter,
            learn_transition: d.learn_transition,
            learn_measurement: d.learn_measurement,
            cluster_candidates: d.cluster_candidates,
        }
    }
}

/// The file as written by a user, echoed into every `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default = "one")]
    pub n_realizations: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default = "one")]
    pub workers: usize,
    /// Also write the tracker's retained draws and the posterior
    /// predictive mean of the next measurement.
    #[serde(default)]
    pub dump_samples: bool,
}

fn default_horizon() -> usize {
    100
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("bkt-output")
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Bkt, Estimator::KfBank]
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), AppError> {
        if let Some(s) = o.seed {
            self.scenario.seed = s;
        }
        if let Some(n) = o.realizations {
            self.n_realizations = n;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(p) = &o.output {
            self.output_dir.clone_from(p);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.n_realizations == 0 {
            return Err(AppError::Config("n_realizations must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(AppError::Config("workers must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(AppError::Config("no estimators selected".into()));
        }
        self.scenario_for(0)?.validate().map_err(AppError::from_config)?;
        self.sampler_for(0).validate().map_err(AppError::from_config)?;
        Ok(())
    }

    /// Seed of realization `r`.
    pub fn realization_seed(&self, r: usize) -> u64 {
        self.scenario.seed.wrapping_add(r as u64)
    }

    pub fn experiment(&self) -> Result<Experiment, AppError> {
        Experiment::parse(&self.scenario.experiment).map_err(AppError::from_config)
    }

    pub fn scenario_for(&self, r: usize) -> Result<ScenarioConfig, AppError> {
        let s = &self.scenario;
        Ok(ScenarioConfig {
            experiment: self.experiment()?,
            horizon: s.horizon,
            measurements_per_step: s.measurements_per_step,
            seed: self.realization_seed(r),
            overrides: s.overrides.clone(),
            initial_state: s.initial_state.clone(),
        })
    }

    pub fn sampler_for(&self, r: usize) -> SamplerConfig {
        let s = &self.sampler;
        SamplerConfig {
            n_iterations: s.n_iterations,
            burn_in: s.burn_in,
            step_size: s.step_size,
            leapfrog_steps: s.leapfrog_steps,
            mass: s.mass.clone(),
            seed: self.realization_seed(r),
            adapt: s.adapt,
            target_accept: s.target_accept,
            step_jitter: s.step_jitter,
            learn_transition: s.learn_transition,
            learn_measurement: s.learn_measurement,
            cluster_candidates: s.cluster_candidates.clone(),
            retain_samples: self.dump_samples,
        }
    }

    pub fn realization_dir(&self, r: usize) -> PathBuf {
        self.output_dir.join(format!("real_{r:04}"))
    }
}
