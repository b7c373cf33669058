use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::dynamics::{MotionModel, ObservationModel, ProcessNoise};
use super::jump::{jump_roundtrip_check, JumpMap, ROUNDTRIP_TOLERANCE};
use super::kernels::{noise_factor, MeasurementKernel, TransitionKernel};
use super::niw::NiwParams;
use super::types::ModelId;
use crate::error::{Error, Result};
use crate::rng::{child_rng, stream};

/// Number of random points used to validate a jump map.
const ROUNDTRIP_SAMPLES: usize = 1000;

/// Open box of admissible observations, per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ObsDomain {
    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v > *lo && *v < *hi)
    }
}

/// Everything needed to assemble a [`ModelBank`].
#[derive(Debug, Clone)]
pub struct BankParts {
    pub description: String,
    pub motion: Arc<dyn MotionModel>,
    pub noise: ProcessNoise,
    pub observation: Arc<dyn ObservationModel>,
    /// Nominal measurement noise `R_j`, one per model.
    pub meas_noise: Vec<DMatrix<f64>>,
    /// Prior over the mixture components, one per model.
    pub niw: Vec<NiwParams>,
    pub jump: JumpMap,
    pub initial_probs: Vec<f64>,
    pub obs_domain: Option<ObsDomain>,
}

/// Immutable registry of the `L` candidate models.
#[derive(Debug, Clone)]
pub struct ModelBank {
    parts: BankParts,
    meas_kernels: Vec<MeasurementKernel>,
}

impl ModelBank {
    pub fn new(parts: BankParts) -> Result<Self> {
        let l = parts.jump.n_models();
        let nx = parts.motion.state_dim();
        let ny = parts.observation.obs_dim();
        if l == 0 {
            return Err(Error::ModelDefinition("empty model bank".into()));
        }
        if parts.noise.state_dim() != nx {
            return Err(Error::dim("process noise", nx, parts.noise.state_dim()));
        }
        if parts.observation.state_dim() != nx {
            return Err(Error::dim("observation input", nx, parts.observation.state_dim()));
        }
        if parts.noise.param_dim() != parts.jump.param_dim() {
            return Err(Error::dim(
                "transition parameters",
                parts.jump.param_dim(),
                parts.noise.param_dim(),
            ));
        }
        if parts.meas_noise.len() != l {
            return Err(Error::dim("measurement noise list", l, parts.meas_noise.len()));
        }
        if parts.niw.len() != l {
            return Err(Error::dim("NIW prior list", l, parts.niw.len()));
        }
        if parts.niw.iter().any(|p| p.dim() != ny) {
            return Err(Error::ModelDefinition(
                "NIW prior dimension differs from observations".into(),
            ));
        }
        if parts.initial_probs.len() != l {
            return Err(Error::dim(
                "initial model probabilities",
                l,
                parts.initial_probs.len(),
            ));
        }
        let total: f64 = parts.initial_probs.iter().sum();
        if parts.initial_probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::ModelDefinition(
                "initial model probabilities must form a simplex".into(),
            ));
        }
        if let Some(d) = &parts.obs_domain {
            if d.lower.len() != ny || d.upper.len() != ny {
                return Err(Error::dim("observation domain", ny, d.lower.len()));
            }
        }
        let zero = alloc::vec![0.0; parts.noise.param_dim()];
        for from in 0..l {
            for to in 0..l {
                let q = parts
                    .noise
                    .covariance(ModelId::from_index(from), ModelId::from_index(to), &zero);
                noise_factor(&q, "transition noise")?;
            }
        }
        let meas_kernels = parts
            .meas_noise
            .iter()
            .enumerate()
            .map(|(j, r)| {
                MeasurementKernel::new(ModelId::from_index(j), parts.observation.clone(), r.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = child_rng(0, &[stream::VALIDATION]);
        let error = jump_roundtrip_check(&parts.jump, ROUNDTRIP_SAMPLES, &mut rng);
        if !(error <= ROUNDTRIP_TOLERANCE) {
            return Err(Error::InvalidJumpMap {
                error,
                tolerance: ROUNDTRIP_TOLERANCE,
            });
        }
        Ok(ModelBank { parts, meas_kernels })
    }

    pub fn n_models(&self) -> usize {
        self.parts.jump.n_models()
    }

    pub fn models(&self) -> impl Iterator<Item = ModelId> {
        (0..self.n_models()).map(ModelId::from_index)
    }

    pub fn state_dim(&self) -> usize {
        self.parts.motion.state_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.parts.observation.obs_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.parts.noise.param_dim()
    }

    pub fn description(&self) -> &str {
        &self.parts.description
    }

    pub fn motion(&self) -> &Arc<dyn MotionModel> {
        &self.parts.motion
    }

    pub fn noise(&self) -> &ProcessNoise {
        &self.parts.noise
    }

    pub fn observation(&self) -> &Arc<dyn ObservationModel> {
        &self.parts.observation
    }

    pub fn jump(&self) -> &JumpMap {
        &self.parts.jump
    }

    pub fn niw(&self, j: ModelId) -> &NiwParams {
        &self.parts.niw[j.index()]
    }

    pub fn initial_probs(&self) -> &[f64] {
        &self.parts.initial_probs
    }

    pub fn obs_domain(&self) -> Option<&ObsDomain> {
        self.parts.obs_domain.as_ref()
    }

    pub fn parts(&self) -> &BankParts {
        &self.parts
    }

    pub fn measurement_kernel(&self, j: ModelId) -> &MeasurementKernel {
        &self.meas_kernels[j.index()]
    }

    pub fn transition_kernel(&self, from: ModelId, to: ModelId, theta: &[f64]) -> Result<TransitionKernel> {
        if theta.len() != self.param_dim() {
            return Err(Error::dim("transition parameters", self.param_dim(), theta.len()));
        }
        let q = self.parts.noise.covariance(from, to, theta);
        TransitionKernel::from_motion(self.parts.motion.clone(), from, to, q)
    }
}
