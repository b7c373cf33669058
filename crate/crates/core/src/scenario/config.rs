use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    /// Three constant-velocity models with growing noise.
    Exp1Linear,
    /// Ten coordinated-turn models under range-bearing measurements.
    Exp2Turn,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp1Linear => "exp1_linear",
            Experiment::Exp2Turn => "exp2_turn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exp1_linear" | "exp1" => Ok(Experiment::Exp1Linear),
            "exp2_turn" | "exp2" => Ok(Experiment::Exp2Turn),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }

    /// Override keys understood by this experiment's bank builder and
    /// simulator.
    pub fn override_keys(self) -> &'static [&'static str] {
        match self {
            Experiment::Exp1Linear => &[
                "delta",
                "alpha",
                "beta",
                "tau",
                "n_models",
                "niw_mean_step",
                "niw_scale",
                "niw_dof",
                "niw_psi_literal",
                "x0",
                "y0",
                "vx0",
                "vy0",
                "p0",
            ],
            Experiment::Exp2Turn => &[
                "accel_coeff",
                "turn_std_coeff",
                "bearing_std_deg",
                "range_std_m",
                "noise_floor",
                "tau",
                "n_models",
                "niw_scale",
                "niw_dof",
                "x0",
                "y0",
                "speed",
                "heading_deg",
                "omega0",
                "p0_pos",
                "p0_vel",
                "p0_omega_deg",
            ],
        }
    }
}

/// What to simulate and how.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub horizon: usize,
    pub measurements_per_step: usize,
    pub seed: u64,
    pub overrides: BTreeMap<String, f64>,
    /// Replaces the experiment's default initial state when set.
    pub initial_state: Option<Vec<f64>>,
}

impl ScenarioConfig {
    pub fn new(experiment: Experiment) -> Self {
        ScenarioConfig {
            experiment,
            horizon: 100,
            measurements_per_step: 1,
            seed: 0,
            overrides: BTreeMap::new(),
            initial_state: None,
        }
    }

    pub fn with_override(mut self, key: &str, value: f64) -> Self {
        self.overrides.insert(key.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.measurements_per_step == 0 {
            return Err(Error::Config("measurements_per_step must be at least 1".into()));
        }
        check_keys(self.experiment, &self.overrides)
    }
}

pub(crate) fn check_keys(experiment: Experiment, overrides: &BTreeMap<String, f64>) -> Result<()> {
    let known = experiment.override_keys();
    for (k, v) in overrides {
        if !known.contains(&k.as_str()) {
            return Err(Error::Config(format!(
                "unknown override `{k}` for {}",
                experiment.name()
            )));
        }
        if !v.is_finite() {
            return Err(Error::Config(format!("override `{k}` must be finite")));
        }
    }
    Ok(())
}

/// Reads a named override with a default and checks it is positive.
pub(crate) fn positive(overrides: &BTreeMap<String, f64>, key: &str, default: f64) -> Result<f64> {
    let v = overrides.get(key).copied().unwrap_or(default);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!(
            "override `{key}` must be positive, got {v}"
        )))
    }
}

pub(crate) fn nonnegative(overrides: &BTreeMap<String, f64>, key: &str, default: f64) -> Result<f64> {
    let v = overrides.get(key).copied().unwrap_or(default);
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!(
            "override `{key}` must be nonnegative, got {v}"
        )))
    }
}

pub(crate) fn count(overrides: &BTreeMap<String, f64>, key: &str, default: usize) -> Result<usize> {
    match overrides.get(key) {
        None => Ok(default),
        Some(&v) if v >= 1.0 && v.fract() == 0.0 && v <= 1000.0 => Ok(v as usize),
        Some(v) => Err(Error::Config(format!(
            "override `{key}` must be a positive integer, got {v}"
        ))),
    }
}
