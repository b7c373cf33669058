use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::types::{ModelId, ParamVec};
use crate::error::{Error, Result};
use crate::linalg::{sample_categorical, LN_2PI};
#[allow(unused_imports)]
use num_traits::Float;

/// Largest inverse-after-forward relative error a registered map may show.
pub const ROUNDTRIP_TOLERANCE: f64 = 1e-8;

/// The model-jump diffeomorphism `h_{j',j}`.
///
/// The discrete part jumps `j' -> j` with probability `J(j' -> j)`. The
/// parameter part carries `theta_{j'}` to `P theta_{j'}` and the parameter
/// kernel draws `theta_j ~ N(P theta_{j'}, tau^2 I)`.
#[derive(Debug, Clone)]
pub struct JumpMap {
    n_models: usize,
    probs: Vec<f64>,
    carry: DMatrix<f64>,
    carry_inv: DMatrix<f64>,
    log_abs_det: f64,
    tau: f64,
}

impl JumpMap {
    /// Uniform rows `J(j' -> j) = 1/L` and identity carry.
    pub fn uniform(n_models: usize, param_dim: usize, tau: f64) -> Result<Self> {
        let p = 1.0 / n_models as f64;
        JumpMap::new(
            DMatrix::from_element(n_models, n_models, p),
            DMatrix::identity(param_dim, param_dim),
            tau,
        )
    }

    pub fn new(probs: DMatrix<f64>, carry: DMatrix<f64>, tau: f64) -> Result<Self> {
        let n = probs.nrows();
        if n == 0 || probs.ncols() != n {
            return Err(Error::dim("jump probabilities", n, probs.ncols()));
        }
        for i in 0..n {
            let row = probs.row(i);
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::ModelDefinition(
                    "jump probabilities must be nonnegative".into(),
                ));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::ModelDefinition(alloc::format!(
                    "jump probability row {} sums to {s}",
                    i + 1
                )));
            }
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::Config("jump kernel tau must be finite and >= 0".into()));
        }
        if !carry.is_square() {
            return Err(Error::dim("jump carry matrix", carry.nrows(), carry.ncols()));
        }
        let lu = carry.clone().lu();
        let det = lu.determinant();
        let carry_inv = lu
            .try_inverse()
            .filter(|_| det != 0.0 && det.is_finite())
            .ok_or_else(|| Error::ModelDefinition("jump carry matrix is singular".into()))?;
        let mut rows = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                rows.push(probs[(i, j)]);
            }
        }
        Ok(JumpMap {
            n_models: n,
            probs: rows,
            carry,
            carry_inv,
            log_abs_det: det.abs().ln(),
            tau,
        })
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn param_dim(&self) -> usize {
        self.carry.nrows()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn carry(&self) -> &DMatrix<f64> {
        &self.carry
    }

    pub fn jump_prob(&self, from: ModelId, to: ModelId) -> f64 {
        self.probs[from.index() * self.n_models + to.index()]
    }

    pub fn log_jump_prob(&self, from: ModelId, to: ModelId) -> f64 {
        self.jump_prob(from, to).ln()
    }

    pub fn row(&self, from: ModelId) -> &[f64] {
        let i = from.index() * self.n_models;
        &self.probs[i..i + self.n_models]
    }

    /// `h_{from,to}(from, theta) = (to, P theta)`.
    pub fn forward(&self, _from: ModelId, to: ModelId, theta: &ParamVec) -> (ModelId, ParamVec) {
        (to, ParamVec::from(&self.carry * theta.to_dvector()))
    }

    /// Inverse of [`JumpMap::forward`].
    pub fn inverse(&self, from: ModelId, _to: ModelId, theta: &ParamVec) -> (ModelId, ParamVec) {
        (from, ParamVec::from(&self.carry_inv * theta.to_dvector()))
    }

    pub fn log_jacobian(&self, _from: ModelId, _to: ModelId, _theta: &ParamVec) -> f64 {
        self.log_abs_det
    }

    /// `log mu(theta_from, theta_to) = log N(theta_to; P theta_from, tau^2 I)`.
    pub fn param_log_density(&self, theta_from: &[f64], theta_to: &[f64]) -> f64 {
        let d = theta_to.len();
        if d == 0 {
            return 0.0;
        }
        let mean = &self.carry * DVector::from_column_slice(theta_from);
        if self.tau == 0.0 {
            let same = mean.iter().zip(theta_to).all(|(a, b)| a == b);
            return if same { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        let t2 = self.tau * self.tau;
        let ss: f64 = mean.iter().zip(theta_to).map(|(m, t)| (t - m) * (t - m)).sum();
        -0.5 * ss / t2 - 0.5 * d as f64 * (LN_2PI + t2.ln())
    }
}

/// Samples `j ~ Cat(J(j_prev -> .))` and `theta_j ~ mu(theta_prev, .)`.
pub fn jump_forward<R: Rng + ?Sized>(
    j_prev: ModelId,
    theta_prev: &ParamVec,
    map: &JumpMap,
    rng: &mut R,
) -> (ModelId, ParamVec) {
    let j = ModelId::from_index(sample_categorical(rng, map.row(j_prev)));
    let (_, mut theta) = map.forward(j_prev, j, theta_prev);
    if map.tau > 0.0 {
        for v in theta.iter_mut() {
            *v += map.tau * rng.sample::<f64, _>(StandardNormal);
        }
    }
    (j, theta)
}

/// Largest relative error of `inverse(forward(theta))` over random points.
pub fn jump_roundtrip_check<R: Rng + ?Sized>(map: &JumpMap, samples: usize, rng: &mut R) -> f64 {
    let d = map.param_dim();
    let l = map.n_models();
    let mut worst = 0.0f64;
    for _ in 0..samples.max(1) {
        let from = ModelId::from_index(rng.random_range(0..l));
        let to = ModelId::from_index(rng.random_range(0..l));
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let theta = ParamVec(
            (0..d)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
        let (_, fwd) = map.forward(from, to, &theta);
        let (back_model, back) = map.inverse(from, to, &fwd);
        if back_model != from {
            return f64::INFINITY;
        }
        let num: f64 = back
            .iter()
            .zip(theta.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = theta.iter().map(|v| v * v).sum();
        if den > 0.0 {
            worst = worst.max((num / den).sqrt());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn single_model_always_returns_itself() {
        let map = JumpMap::uniform(1, 2, 0.1).unwrap();
        let mut rng = rng_from_seed(5);
        let one = ModelId::from_index(0);
        for _ in 0..100 {
            let (j, theta) = jump_forward(one, &ParamVec(alloc::vec![0.3, -0.2]), &map, &mut rng);
            assert_eq!(j, one);
            assert!(theta.is_finite());
        }
    }

    #[test]
    fn uniform_rows_give_uniform_targets() {
        let map = JumpMap::uniform(3, 1, 0.1).unwrap();
        let mut rng = rng_from_seed(9);
        let n = 30_000;
        let mut counts = [0usize; 3];
        let from = ModelId::from_index(1);
        for _ in 0..n {
            let (j, _) = jump_forward(from, &ParamVec(alloc::vec![0.0]), &map, &mut rng);
            counts[j.index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn zero_variance_kernel_carries_theta_exactly() {
        let map = JumpMap::uniform(3, 2, 0.0).unwrap();
        let mut rng = rng_from_seed(2);
        let theta = ParamVec(alloc::vec![0.25, -1.5]);
        let (_, out) = jump_forward(ModelId::from_index(0), &theta, &map, &mut rng);
        assert_eq!(out, theta);
    }

    #[test]
    fn identity_map_round_trips_exactly() {
        let map = JumpMap::uniform(4, 3, 0.1).unwrap();
        let mut rng = rng_from_seed(3);
        assert_eq!(jump_roundtrip_check(&map, 1000, &mut rng), 0.0);
    }

    #[test]
    fn rows_must_sum_to_one() {
        let probs = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.6, 0.5]);
        assert!(JumpMap::new(probs, DMatrix::identity(1, 1), 0.1).is_err());
    }

    #[test]
    fn parameter_kernel_is_gaussian() {
        let map = JumpMap::uniform(2, 1, 0.5).unwrap();
        let v = map.param_log_density(&[1.0], &[1.5]);
        let expect = -0.5 * 1.0 - 0.5 * (LN_2PI + 0.25f64.ln());
        assert!((v - expect).abs() < 1e-14);
    }
}
