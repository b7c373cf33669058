//! The two reference experiments and the ground-truth simulator.

mod config;
mod exp1;
mod exp2;
mod simulate;

pub use config::{Experiment, ScenarioConfig};
pub use exp1::{
    build_exp1_bank, exp1_initial_cov, exp1_initial_state, exp1_observation_matrix, exp1_process_variances,
    exp1_transition_matrix,
};
pub use exp2::{
    build_exp2_bank, exp2_initial_cov, exp2_initial_state, turn_coefficients, BearingRange, CoordinatedTurn,
};
pub use simulate::{simulate, ScenarioTruth, MAX_MEASUREMENT_RETRIES, MAX_TRAJECTORY_RETRIES};

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::ModelBank;

pub fn build_bank(cfg: &ScenarioConfig) -> Result<ModelBank> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Exp1Linear => build_exp1_bank(&cfg.overrides),
        Experiment::Exp2Turn => build_exp2_bank(&cfg.overrides),
    }
}

pub fn initial_state(cfg: &ScenarioConfig) -> Vec<f64> {
    if let Some(x) = &cfg.initial_state {
        return x.clone();
    }
    match cfg.experiment {
        Experiment::Exp1Linear => exp1_initial_state(&cfg.overrides),
        Experiment::Exp2Turn => exp2_initial_state(&cfg.overrides),
    }
}

/// Covariance of the initial-state prior handed to trackers.
pub fn initial_cov(cfg: &ScenarioConfig) -> Result<DMatrix<f64>> {
    match cfg.experiment {
        Experiment::Exp1Linear => exp1_initial_cov(&cfg.overrides),
        Experiment::Exp2Turn => exp2_initial_cov(&cfg.overrides),
    }
}
