use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use nalgebra::DMatrix;

use super::types::ModelId;
use crate::error::{Error, Result};
use crate::linalg::to_row_major;
#[allow(unused_imports)]
use num_traits::Float;

/// Deterministic part `g_{j',j}` of the state transition.
pub trait MotionModel: Send + Sync + Debug {
    fn state_dim(&self) -> usize;

    /// Writes the mean of the next state after moving from model `from` to
    /// model `to` into `out`.
    fn mean(&self, from: ModelId, to: ModelId, x: &[f64], out: &mut [f64]);

    /// Accumulates `J^T cot` into `out`, where `J` is the Jacobian of
    /// [`MotionModel::mean`] at `x`.
    fn mean_vjp(&self, from: ModelId, to: ModelId, x: &[f64], cot: &[f64], out: &mut [f64]);

    fn jacobian(&self, from: ModelId, to: ModelId, x: &[f64]) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut jac = DMatrix::zeros(n, n);
        let mut cot = vec![0.0; n];
        let mut row = vec![0.0; n];
        for i in 0..n {
            cot.iter_mut().for_each(|v| *v = 0.0);
            row.iter_mut().for_each(|v| *v = 0.0);
            cot[i] = 1.0;
            self.mean_vjp(from, to, x, &cot, &mut row);
            for j in 0..n {
                jac[(i, j)] = row[j];
            }
        }
        jac
    }
}

/// Observation map `T(x)`.
pub trait ObservationModel: Send + Sync + Debug {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn predict(&self, x: &[f64], out: &mut [f64]);
    /// Accumulates `J^T cot` into `out`.
    fn vjp(&self, x: &[f64], cot: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.state_dim(), self.obs_dim());
        let mut jac = DMatrix::zeros(m, n);
        let mut cot = vec![0.0; m];
        let mut row = vec![0.0; n];
        for i in 0..m {
            cot.iter_mut().for_each(|v| *v = 0.0);
            row.iter_mut().for_each(|v| *v = 0.0);
            cot[i] = 1.0;
            self.vjp(x, &cot, &mut row);
            for j in 0..n {
                jac[(i, j)] = row[j];
            }
        }
        jac
    }
}

/// `x -> A x`, the same for every model pair.
#[derive(Debug, Clone)]
pub struct LinearMotion {
    a: DMatrix<f64>,
    rows: Vec<f64>,
}

impl LinearMotion {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim("transition matrix", a.nrows(), a.ncols()));
        }
        let rows = to_row_major(&a);
        Ok(LinearMotion { a, rows })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl MotionModel for LinearMotion {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn mean(&self, _from: ModelId, _to: ModelId, x: &[f64], out: &mut [f64]) {
        let n = self.a.nrows();
        for i in 0..n {
            out[i] = self.rows[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    fn mean_vjp(&self, _from: ModelId, _to: ModelId, _x: &[f64], cot: &[f64], out: &mut [f64]) {
        let n = self.a.nrows();
        for i in 0..n {
            let c = cot[i];
            if c != 0.0 {
                for j in 0..n {
                    out[j] += self.rows[i * n + j] * c;
                }
            }
        }
    }

    fn jacobian(&self, _from: ModelId, _to: ModelId, _x: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// `x -> C x`.
#[derive(Debug, Clone)]
pub struct LinearObservation {
    c: DMatrix<f64>,
    rows: Vec<f64>,
}

impl LinearObservation {
    pub fn new(c: DMatrix<f64>) -> Self {
        let rows = to_row_major(&c);
        LinearObservation { c, rows }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }
}

impl ObservationModel for LinearObservation {
    fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    fn predict(&self, x: &[f64], out: &mut [f64]) {
        let n = self.c.ncols();
        for (i, o) in out.iter_mut().enumerate().take(self.c.nrows()) {
            *o = self.rows[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    fn vjp(&self, _x: &[f64], cot: &[f64], out: &mut [f64]) {
        let n = self.c.ncols();
        for (i, &c) in cot.iter().enumerate().take(self.c.nrows()) {
            if c != 0.0 {
                for j in 0..n {
                    out[j] += self.rows[i * n + j] * c;
                }
            }
        }
    }

    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.c.clone()
    }
}

/// One additive noise source: `scale * factor * z` with `z ~ N(0, I)`.
///
/// `base_std` is indexed `[from * L + to]`. When `theta_index` is set the
/// scale is `base_std * exp(theta[theta_index] / 2)`, so the parameter is
/// a log-variance deviation from the nominal model.
#[derive(Debug, Clone)]
pub struct NoiseBlock {
    pub factor: DMatrix<f64>,
    pub base_std: Vec<f64>,
    pub theta_index: Option<usize>,
}

/// Process noise `v_{j'->j}` as a sum of scaled factor blocks. Its
/// covariance is `sum_g s_g^2 F_g F_g^T`.
#[derive(Debug, Clone)]
pub struct ProcessNoise {
    state_dim: usize,
    n_models: usize,
    param_dim: usize,
    blocks: Vec<NoiseBlock>,
    // Row-major factors and column offsets of each block inside the
    // stacked noise vector.
    factor_rows: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    noise_dim: usize,
}

impl ProcessNoise {
    pub fn new(state_dim: usize, n_models: usize, param_dim: usize, blocks: Vec<NoiseBlock>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut noise_dim = 0;
        for b in &blocks {
            if b.factor.nrows() != state_dim {
                return Err(Error::dim("noise factor rows", state_dim, b.factor.nrows()));
            }
            if b.base_std.len() != n_models * n_models {
                return Err(Error::dim(
                    "noise base std table",
                    n_models * n_models,
                    b.base_std.len(),
                ));
            }
            if b.base_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::ModelDefinition(
                    "noise standard deviations must be finite and nonnegative".into(),
                ));
            }
            if let Some(i) = b.theta_index {
                if i >= param_dim {
                    return Err(Error::dim("noise theta index", param_dim, i));
                }
            }
            offsets.push(noise_dim);
            noise_dim += b.factor.ncols();
        }
        let factor_rows = blocks.iter().map(|b| to_row_major(&b.factor)).collect();
        Ok(ProcessNoise {
            state_dim,
            n_models,
            param_dim,
            blocks,
            factor_rows,
            offsets,
            noise_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    /// Length of the stacked standard-normal vector `z`.
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn blocks(&self) -> &[NoiseBlock] {
        &self.blocks
    }

    pub fn block_scale(&self, block: usize, from: ModelId, to: ModelId, theta: &[f64]) -> f64 {
        let b = &self.blocks[block];
        let base = b.base_std[from.index() * self.n_models + to.index()];
        match b.theta_index {
            Some(i) => base * (0.5 * theta[i]).exp(),
            None => base,
        }
    }

    pub fn covariance(&self, from: ModelId, to: ModelId, theta: &[f64]) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.state_dim, self.state_dim);
        for (g, b) in self.blocks.iter().enumerate() {
            let s = self.block_scale(g, from, to, theta);
            if s != 0.0 {
                q += (&b.factor * b.factor.transpose()) * (s * s);
            }
        }
        q
    }

    /// `out += sum_g s_g F_g z_g`.
    pub fn apply(&self, from: ModelId, to: ModelId, theta: &[f64], z: &[f64], out: &mut [f64]) {
        let n = self.state_dim;
        for (g, rows) in self.factor_rows.iter().enumerate() {
            let s = self.block_scale(g, from, to, theta);
            if s == 0.0 {
                continue;
            }
            let r = self.blocks[g].factor.ncols();
            let zg = &z[self.offsets[g]..self.offsets[g] + r];
            for i in 0..n {
                let mut acc = 0.0;
                for c in 0..r {
                    acc += rows[i * r + c] * zg[c];
                }
                out[i] += s * acc;
            }
        }
    }

    /// Given `cot = d logp / d x` for `x = mean + noise(z, theta)`, adds the
    /// gradient with respect to `z` into `grad_z` and with respect to
    /// `theta` into `grad_theta` (when provided).
    pub fn apply_vjp(
        &self,
        from: ModelId,
        to: ModelId,
        theta: &[f64],
        z: &[f64],
        cot: &[f64],
        grad_z: &mut [f64],
        mut grad_theta: Option<&mut [f64]>,
    ) {
        let n = self.state_dim;
        for (g, rows) in self.factor_rows.iter().enumerate() {
            let s = self.block_scale(g, from, to, theta);
            if s == 0.0 {
                continue;
            }
            let r = self.blocks[g].factor.ncols();
            let off = self.offsets[g];
            let mut dot = 0.0;
            for c in 0..r {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += rows[i * r + c] * cot[i];
                }
                grad_z[off + c] += s * acc;
                dot += acc * z[off + c];
            }
            if let (Some(i), Some(gt)) = (self.blocks[g].theta_index, grad_theta.as_deref_mut()) {
                gt[i] += 0.5 * s * dot;
            }
        }
    }
}
