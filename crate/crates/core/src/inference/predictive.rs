//! Posterior predictive density of the next measurement.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::step::StepSamples;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_sum_exp, mvn_log_pdf_chol};
use crate::model::{ModelBank, ModelId};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
struct Component {
    log_weight: f64,
    mean: Vec<f64>,
    /// `None` for an exactly degenerate covariance.
    chol: Option<DMatrix<f64>>,
}

/// Gaussian mixture over retained draws `(M_k, x_k, theta_k)` and jump
/// targets `j`: `y_{k+1} ~ N(T(g(x_k)), H Q H^T + R_j)` with `H` the
/// observation Jacobian at `g(x_k)` and the transition parameters carried
/// by the jump map.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPredictive {
    components: Vec<Component>,
}

impl PosteriorPredictive {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Mixture mean.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.components.first().map_or(0, |c| c.mean.len());
        let mut out = vec![0.0; d];
        for c in &self.components {
            let w = c.log_weight.exp();
            for (o, m) in out.iter_mut().zip(&c.mean) {
                *o += w * m;
            }
        }
        out
    }

    /// `log p(y)`. Degenerate components act as point masses: `+inf` at
    /// their mean and no mass elsewhere.
    pub fn log_density(&self, y: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| match &c.chol {
                Some(l) => c.log_weight + mvn_log_pdf_chol(y, &c.mean, l),
                None if c.mean.as_slice() == y => f64::INFINITY,
                None => f64::NEG_INFINITY,
            })
            .collect();
        log_sum_exp(&terms)
    }
}

pub fn posterior_predictive(bank: &ModelBank, samples: &StepSamples) -> Result<PosteriorPredictive> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Config(
            "posterior predictive needs retained samples".into(),
        ));
    }
    let nx = bank.state_dim();
    let ny = bank.obs_dim();
    let log_n = (n as f64).ln();
    let carry = bank.jump().carry();
    let mut components = Vec::with_capacity(n * bank.n_models());
    let mut x_next = vec![0.0; nx];
    let mut y_mean = vec![0.0; ny];
    for i in 0..n {
        let from = samples.models[i];
        let theta = carry * DVector::from_column_slice(samples.param(i));
        for j in 0..bank.n_models() {
            let to = ModelId::from_index(j);
            let lj = bank.jump().log_jump_prob(from, to);
            if lj == f64::NEG_INFINITY {
                continue;
            }
            bank.motion().mean(from, to, samples.state(i), &mut x_next);
            bank.observation().predict(&x_next, &mut y_mean);
            let h = bank.observation().jacobian(&x_next);
            let q = bank.noise().covariance(from, to, theta.as_slice());
            let s = &h * q * h.transpose() + bank.measurement_kernel(to).noise_cov();
            let chol = if s.iter().all(|v| *v == 0.0) {
                None
            } else {
                Some(cholesky(&s, "predictive covariance")?)
            };
            components.push(Component {
                log_weight: lj - log_n,
                mean: y_mean.clone(),
                chol,
            });
        }
    }
    Ok(PosteriorPredictive { components })
}
