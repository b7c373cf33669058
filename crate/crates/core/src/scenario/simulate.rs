use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::linalg::sample_categorical;
use crate::model::{
    jump_forward, propagate_state, sample_measurements, MeasurementHierarchy, ModelBank, ModelId, ObsVec,
    ParamVec, StateVec,
};
use crate::rng::{child_rng, stream};

/// Redraws allowed for one measurement that falls outside the domain.
pub const MAX_MEASUREMENT_RETRIES: usize = 100;
/// Fresh trajectories allowed when the object itself leaves the domain.
pub const MAX_TRAJECTORY_RETRIES: usize = 1000;

/// Ground truth of one simulated run. Index `k - 1` holds step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTruth {
    pub initial_state: StateVec,
    /// Model active before the first step.
    pub initial_model: ModelId,
    pub model_seq: Vec<ModelId>,
    pub params: Vec<ParamVec>,
    pub states: Vec<StateVec>,
    pub measurements: Vec<Vec<ObsVec>>,
}

impl ScenarioTruth {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

/// Simulates one run. The object starts at the configured initial state
/// under a model drawn from the bank's initial probabilities, then jumps,
/// moves and is observed `horizon` times. With an observation domain, a
/// measurement outside it is redrawn, and a trajectory whose noiseless
/// observation leaves it is restarted.
pub fn simulate(bank: &ModelBank, cfg: &ScenarioConfig) -> Result<ScenarioTruth> {
    cfg.validate()?;
    let x0 = StateVec(super::initial_state(cfg));
    if x0.dim() != bank.state_dim() {
        return Err(Error::dim("initial state", bank.state_dim(), x0.dim()));
    }
    let mut rng = child_rng(cfg.seed, &[stream::SIMULATION]);
    let mut last_step = 0;
    for _ in 0..MAX_TRAJECTORY_RETRIES {
        match simulate_once(bank, cfg, &x0, &mut rng)? {
            Ok(truth) => return Ok(truth),
            Err(step) => last_step = step,
        }
    }
    Err(Error::Simulation {
        step: last_step,
        reason: format!("object left the observation domain in {MAX_TRAJECTORY_RETRIES} attempts"),
    })
}

// Outer error: hard failure. Inner error: the step at which the object
// left the domain.
fn simulate_once<R: Rng + ?Sized>(
    bank: &ModelBank,
    cfg: &ScenarioConfig,
    x0: &StateVec,
    rng: &mut R,
) -> Result<core::result::Result<ScenarioTruth, usize>> {
    let k_max = cfg.horizon;
    let m0 = ModelId::from_index(sample_categorical(rng, bank.initial_probs()));
    let mut prev_model = m0;
    let mut prev_theta = ParamVec::zeros(bank.param_dim());
    let mut x = x0.clone();
    let mut truth = ScenarioTruth {
        initial_state: x0.clone(),
        initial_model: m0,
        model_seq: Vec::with_capacity(k_max),
        params: Vec::with_capacity(k_max),
        states: Vec::with_capacity(k_max),
        measurements: Vec::with_capacity(k_max),
    };
    for k in 1..=k_max {
        let (j, theta) = jump_forward(prev_model, &prev_theta, bank.jump(), rng);
        let kernel = bank.transition_kernel(prev_model, j, &theta)?;
        x = propagate_state(&x, &kernel, rng)?;
        if !x.is_finite() {
            return Err(Error::Simulation {
                step: k,
                reason: "state became non-finite".into(),
            });
        }
        let mk = bank.measurement_kernel(j);
        if let Some(domain) = bank.obs_domain() {
            if !domain.contains(&mk.predict(&x)) {
                return Ok(Err(k));
            }
        }
        let h = MeasurementHierarchy::from_kernel(mk, bank.niw(j).clone(), 0);
        let mut ys = Vec::with_capacity(cfg.measurements_per_step);
        for _ in 0..cfg.measurements_per_step {
            let mut accepted = None;
            for _ in 0..MAX_MEASUREMENT_RETRIES {
                let y = sample_measurements(&x, mk, &h, 1, rng)?.pop().expect("one draw");
                if bank.obs_domain().is_none_or(|d| d.contains(&y)) {
                    accepted = Some(y);
                    break;
                }
            }
            match accepted {
                Some(y) => ys.push(y),
                None => {
                    return Err(Error::Simulation {
                        step: k,
                        reason: "measurement redraws exhausted".into(),
                    })
                }
            }
        }
        truth.model_seq.push(j);
        truth.params.push(theta.clone());
        truth.states.push(x.clone());
        truth.measurements.push(ys);
        prev_model = j;
        prev_theta = theta;
    }
    Ok(Ok(truth))
}
