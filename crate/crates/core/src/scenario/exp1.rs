use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::config::{check_keys, count, positive, Experiment};
use crate::error::Result;
use crate::model::{
    BankParts, JumpMap, LinearMotion, LinearObservation, ModelBank, NiwParams, NoiseBlock, ProcessNoise,
};
#[allow(unused_imports)]
use num_traits::Float;

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_MODELS: usize = 3;
pub const DEFAULT_NIW_SCALE: f64 = 100.0;
pub const DEFAULT_NIW_DOF: f64 = 100.0;

/// Constant-velocity transition `[[I, dt I], [0, I]]` on `(x, y, vx, vy)`.
pub fn exp1_transition_matrix(delta: f64) -> DMatrix<f64> {
    let mut a = DMatrix::identity(4, 4);
    a[(0, 2)] = delta;
    a[(1, 3)] = delta;
    a
}

pub fn exp1_observation_matrix() -> DMatrix<f64> {
    let mut c = DMatrix::zeros(2, 4);
    c[(0, 0)] = 1.0;
    c[(1, 1)] = 1.0;
    c
}

/// Diagonal of `Q_j` for one-based model label `j`.
pub fn exp1_process_variances(j: usize, alpha: f64, delta: f64) -> [f64; 4] {
    let j = j as f64;
    let p = alpha * j * delta * delta / 4.0;
    let v = alpha * j * j * delta / 3.0;
    [p, p, v, v]
}

/// Linear constant-velocity bank.
///
/// Each model's transition parameters are log-variance deviations of the
/// four diagonal entries of `Q_j`. Measurement noise is `R_j = j beta I`.
/// The NIW prior of model `j` is centered on `R_j`: `Psi = (nu - 3) R_j`,
/// so the prior mode over the component covariance sits at the nominal
/// noise, and the offset prior is `N(0.001 j, Sigma / lambda)`.
pub fn build_exp1_bank(overrides: &BTreeMap<String, f64>) -> Result<ModelBank> {
    check_keys(Experiment::Exp1Linear, overrides)?;
    let delta = positive(overrides, "delta", DEFAULT_DELTA)?;
    let alpha = positive(overrides, "alpha", DEFAULT_ALPHA)?;
    let beta = positive(overrides, "beta", DEFAULT_BETA)?;
    let tau = super::config::nonnegative(overrides, "tau", DEFAULT_TAU)?;
    let l = count(overrides, "n_models", DEFAULT_MODELS)?;
    let mean_step = overrides.get("niw_mean_step").copied().unwrap_or(0.001);
    let lambda = positive(overrides, "niw_scale", DEFAULT_NIW_SCALE)?;
    let nu = positive(overrides, "niw_dof", DEFAULT_NIW_DOF)?;
    let literal_psi = overrides.get("niw_psi_literal").copied().unwrap_or(0.0) != 0.0;

    let blocks = (0..4)
        .map(|i| {
            let mut factor = DMatrix::zeros(4, 1);
            factor[(i, 0)] = 1.0;
            let mut base_std = Vec::with_capacity(l * l);
            for _from in 0..l {
                for to in 0..l {
                    base_std.push(exp1_process_variances(to + 1, alpha, delta)[i].sqrt());
                }
            }
            NoiseBlock {
                factor,
                base_std,
                theta_index: Some(i),
            }
        })
        .collect();
    let noise = ProcessNoise::new(4, l, 4, blocks)?;

    let meas_noise: Vec<DMatrix<f64>> = (1..=l)
        .map(|j| DMatrix::identity(2, 2) * (j as f64 * beta))
        .collect();
    let niw = meas_noise
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let j = (i + 1) as f64;
            let psi = if literal_psi {
                DMatrix::identity(2, 2) * j
            } else {
                r * (nu - 3.0)
            };
            NiwParams::new(vec![mean_step * j; 2], lambda, psi, nu)
        })
        .collect::<Result<Vec<_>>>()?;

    ModelBank::new(BankParts {
        description: format!(
            "exp1_linear: L={l}, delta={delta}, alpha={alpha}, beta={beta}, tau={tau}, \
             niw=(m=0.001j, lambda={lambda}, nu={nu}, psi={})",
            if literal_psi { "jI" } else { "(nu-3)R_j" }
        ),
        motion: Arc::new(LinearMotion::new(exp1_transition_matrix(delta))?),
        noise,
        observation: Arc::new(LinearObservation::new(exp1_observation_matrix())),
        meas_noise,
        niw,
        jump: JumpMap::uniform(l, 4, tau)?,
        initial_probs: vec![1.0 / l as f64; l],
        obs_domain: None,
    })
}

pub fn exp1_initial_state(overrides: &BTreeMap<String, f64>) -> Vec<f64> {
    let g = |k: &str, d: f64| overrides.get(k).copied().unwrap_or(d);
    vec![g("x0", 0.0), g("y0", 0.0), g("vx0", 1.0), g("vy0", 1.0)]
}

pub fn exp1_initial_cov(overrides: &BTreeMap<String, f64>) -> Result<DMatrix<f64>> {
    Ok(DMatrix::identity(4, 4) * positive(overrides, "p0", 10.0)?)
}
