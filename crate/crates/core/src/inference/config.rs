use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Sampler settings shared by the tracker and the trajectory chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub step_size: f64,
    pub leapfrog_steps: usize,
    /// Diagonal mass; `None` means identity.
    pub mass: Option<Vec<f64>>,
    pub seed: u64,
    /// Tune the step size and diagonal mass during burn-in.
    pub adapt: bool,
    pub target_accept: f64,
    /// Relative uniform jitter applied to the step size after burn-in.
    pub step_jitter: f64,
    /// Sample the transition parameters; otherwise they stay at zero.
    pub learn_transition: bool,
    /// Sample the mixture measurement model; otherwise each model uses
    /// one centered component with its nominal noise.
    pub learn_measurement: bool,
    pub cluster_candidates: Vec<usize>,
    /// Keep the post-burn-in draws of every step in the summary.
    pub retain_samples: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iterations: 2000,
            burn_in: 500,
            step_size: 0.02,
            leapfrog_steps: 20,
            mass: None,
            seed: 0,
            adapt: true,
            target_accept: 0.8,
            step_jitter: 0.1,
            learn_transition: true,
            learn_measurement: true,
            cluster_candidates: vec![1, 2, 3],
            retain_samples: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::Config("n_iterations must be positive".into()));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::Config("burn_in must be smaller than n_iterations".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("hmc step size must be positive".into()));
        }
        if self.leapfrog_steps == 0 {
            return Err(Error::Config("leapfrog_steps must be positive".into()));
        }
        if let Some(m) = &self.mass {
            if m.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("mass entries must be positive".into()));
            }
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target acceptance must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return Err(Error::Config("step jitter must lie in [0, 1)".into()));
        }
        if self.cluster_candidates.is_empty() || self.cluster_candidates.contains(&0) {
            return Err(Error::Config(
                "cluster candidates must be positive and nonempty".into(),
            ));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.n_iterations - self.burn_in
    }
}
