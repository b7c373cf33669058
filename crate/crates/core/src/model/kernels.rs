use alloc::sync::Arc;
use alloc::vec;

use nalgebra::DMatrix;
use rand::Rng;

use super::dynamics::{MotionModel, ObservationModel};
use super::types::{ModelId, ObsVec, StateVec};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, mvn_log_pdf_chol, sample_mvn};

/// Lower factor of a noise covariance. An all-zero covariance gets a zero
/// factor (deterministic noise); anything else must be positive definite.
pub fn noise_factor(cov: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if cov.iter().all(|v| *v == 0.0) {
        Ok(DMatrix::zeros(cov.nrows(), cov.ncols()))
    } else {
        cholesky(cov, what)
    }
}

#[derive(Debug, Clone)]
enum MeanMap {
    Matrix(DMatrix<f64>),
    Motion(Arc<dyn MotionModel>),
}

/// `x_k ~ N(g_{j',j}(x_{k-1}), Q)` for one model pair.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    pub source_model: ModelId,
    pub target_model: ModelId,
    mean_map: MeanMap,
    noise_cov: DMatrix<f64>,
    noise_chol: DMatrix<f64>,
    degenerate: bool,
}

impl TransitionKernel {
    /// Stand-alone linear kernel `x -> A x` with noise covariance `q`.
    /// A zero `q` gives a deterministic kernel.
    pub fn linear(a: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || q.nrows() != a.nrows() || q.ncols() != a.nrows() {
            return Err(Error::dim("linear kernel", a.nrows(), q.nrows()));
        }
        let chol = noise_factor(&q, "transition noise")?;
        let degenerate = q.iter().all(|v| *v == 0.0);
        Ok(TransitionKernel {
            source_model: ModelId::from_index(0),
            target_model: ModelId::from_index(0),
            mean_map: MeanMap::Matrix(a),
            noise_cov: q,
            noise_chol: chol,
            degenerate,
        })
    }

    pub(crate) fn from_motion(
        motion: Arc<dyn MotionModel>,
        from: ModelId,
        to: ModelId,
        noise_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let noise_chol = noise_factor(&noise_cov, "transition noise")?;
        let degenerate = noise_cov.iter().all(|v| *v == 0.0);
        Ok(TransitionKernel {
            source_model: from,
            target_model: to,
            mean_map: MeanMap::Motion(motion),
            noise_cov,
            noise_chol,
            degenerate,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.noise_cov.nrows()
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn noise_chol(&self) -> &DMatrix<f64> {
        &self.noise_chol
    }

    /// True when the noise covariance is exactly zero.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn mean(&self, x: &[f64]) -> StateVec {
        match &self.mean_map {
            MeanMap::Matrix(a) => {
                let v = a * nalgebra::DVector::from_column_slice(x);
                StateVec::from(v)
            }
            MeanMap::Motion(m) => {
                let mut out = vec![0.0; x.len()];
                m.mean(self.source_model, self.target_model, x, &mut out);
                StateVec(out)
            }
        }
    }
}

/// Draws `g(x) + v` with `v ~ N(0, Q)`.
pub fn propagate_state<R: Rng + ?Sized>(
    x: &StateVec,
    kernel: &TransitionKernel,
    rng: &mut R,
) -> Result<StateVec> {
    if x.dim() != kernel.state_dim() {
        return Err(Error::dim("propagate_state", kernel.state_dim(), x.dim()));
    }
    let mean = kernel.mean(x);
    Ok(StateVec(sample_mvn(rng, &mean, &kernel.noise_chol)))
}

/// `log N(x_next; g(x), Q)`. A deterministic kernel gives `+inf` at the
/// mean and `-inf` elsewhere.
pub fn transition_log_density(x_next: &StateVec, x: &StateVec, kernel: &TransitionKernel) -> f64 {
    let mean = kernel.mean(x);
    if kernel.degenerate {
        return if mean.0 == x_next.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    mvn_log_pdf_chol(x_next, &mean, &kernel.noise_chol)
}

/// `y = T(x) + w` with `w ~ N(0, R_j)`.
#[derive(Debug, Clone)]
pub struct MeasurementKernel {
    pub model: ModelId,
    obs_map: Arc<dyn ObservationModel>,
    noise_cov: DMatrix<f64>,
    noise_chol: DMatrix<f64>,
}

impl MeasurementKernel {
    pub fn new(model: ModelId, obs_map: Arc<dyn ObservationModel>, noise_cov: DMatrix<f64>) -> Result<Self> {
        if noise_cov.nrows() != obs_map.obs_dim() {
            return Err(Error::dim(
                "measurement noise",
                obs_map.obs_dim(),
                noise_cov.nrows(),
            ));
        }
        let noise_chol = noise_factor(&noise_cov, "measurement noise")?;
        Ok(MeasurementKernel {
            model,
            obs_map,
            noise_cov,
            noise_chol,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_map.obs_dim()
    }

    pub fn obs_map(&self) -> &Arc<dyn ObservationModel> {
        &self.obs_map
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn noise_chol(&self) -> &DMatrix<f64> {
        &self.noise_chol
    }

    pub fn predict(&self, x: &[f64]) -> ObsVec {
        let mut out = vec![0.0; self.obs_map.obs_dim()];
        self.obs_map.predict(x, &mut out);
        ObsVec(out)
    }
}
