//! Whole-trajectory posterior in natural coordinates.
//!
//! This is the joint density over every step's state, model, transition
//! parameters and measurement mixture given all measurements. The
//! sequential tracker never evaluates it; it backs the debug chain and the
//! oracle tests (enumeration of model paths, gradient checks, HMC
//! calibration on the full joint).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::config::SamplerConfig;
use super::hmc::{Hmc, HmcState, Potential, Transition};
use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, cholesky, normalize_log_weights, sample_categorical, LN_2PI};
use crate::model::{
    dirichlet_log_density, jump_forward, niw_log_density, niw_sample, propagate_state, sample_dirichlet,
    GmmComponent, MeasurementHierarchy, ModelBank, ModelId, ObsVec, ParamVec, StateVec,
};
#[allow(unused_imports)]
use num_traits::Float;

/// Every latent variable of a trajectory. Index `k - 1` holds step `k`.
///
/// Step 0 is a fixed anchor: `x_0` and, when known, the model `M_0`.
/// Without an anchor model the first model is drawn from the bank's
/// initial probabilities and `x_1` moves from `x_0` under `M_1 -> M_1`.
/// Transition parameters start from `theta_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub anchor_state: StateVec,
    pub anchor_model: Option<ModelId>,
    pub states: Vec<StateVec>,
    pub models: Vec<ModelId>,
    pub params: Vec<ParamVec>,
    pub hierarchies: Vec<MeasurementHierarchy>,
}

impl ChainState {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// Draws a trajectory from the prior: models and parameters by the
    /// jump kernel, states by the transition kernels, and `n_clusters`
    /// components per step from the active model's NIW prior with
    /// Dirichlet weights and uniform labels. `n_obs[k]` is the number of
    /// measurements at step `k + 1`.
    pub fn sample_prior<R: Rng + ?Sized>(
        bank: &ModelBank,
        anchor_state: &[f64],
        anchor_model: Option<ModelId>,
        n_obs: &[usize],
        n_clusters: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if anchor_state.len() != bank.state_dim() {
            return Err(Error::dim("anchor state", bank.state_dim(), anchor_state.len()));
        }
        if n_clusters == 0 {
            return Err(Error::Config("at least one cluster is required".into()));
        }
        let k = n_obs.len();
        let mut models = Vec::with_capacity(k);
        let mut params = Vec::with_capacity(k);
        let mut states = Vec::with_capacity(k);
        let mut hierarchies = Vec::with_capacity(k);
        let mut prev_model = match anchor_model {
            Some(m) => m,
            None => ModelId::from_index(sample_categorical(rng, bank.initial_probs())),
        };
        let mut theta = ParamVec::zeros(bank.param_dim());
        let mut x = StateVec::from(anchor_state);
        for &m in n_obs {
            let (next, th) = jump_forward(prev_model, &theta, bank.jump(), rng);
            let kernel = bank.transition_kernel(prev_model, next, &th)?;
            x = propagate_state(&x, &kernel, rng)?;
            let prior = bank.niw(next);
            let components = (0..n_clusters)
                .map(|_| niw_sample(prior, rng))
                .collect::<Result<Vec<_>>>()?;
            let weights = sample_dirichlet(&vec![1.0 / n_clusters as f64; n_clusters], rng);
            let assignments = (0..m).map(|_| rng.random_range(0..n_clusters)).collect();
            hierarchies.push(MeasurementHierarchy {
                weights,
                assignments,
                components,
                niw_prior: prior.clone(),
            });
            models.push(next);
            params.push(th.clone());
            states.push(x.clone());
            prev_model = next;
            theta = th;
        }
        Ok(ChainState {
            anchor_state: StateVec::from(anchor_state),
            anchor_model,
            states,
            models,
            params,
            hierarchies,
        })
    }

    /// Length of the continuous coordinate vector.
    pub fn continuous_dim(&self) -> usize {
        let mut n = 0;
        for k in 0..self.horizon() {
            n += self.states[k].dim() + self.params[k].dim();
            for c in &self.hierarchies[k].components {
                let d = c.mean.len();
                n += 2 * d + d * (d - 1) / 2;
            }
        }
        n
    }

    /// Continuous coordinates, step by step: `x_k`, `theta_k`, then per
    /// component the mean followed by the log-diagonal and the strict
    /// lower triangle (row order) of the covariance's Cholesky factor.
    pub fn pack(&self) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.continuous_dim());
        for k in 0..self.horizon() {
            q.extend_from_slice(&self.states[k]);
            q.extend_from_slice(&self.params[k]);
            for c in &self.hierarchies[k].components {
                let d = c.mean.len();
                q.extend_from_slice(&c.mean);
                let l = cholesky(&c.cov, "component covariance")
                    .expect("component covariances are positive definite");
                for i in 0..d {
                    q.push(l[(i, i)].ln());
                }
                for i in 0..d {
                    for j in 0..i {
                        q.push(l[(i, j)]);
                    }
                }
            }
        }
        q
    }

    /// Inverse of [`ChainState::pack`].
    pub fn unpack(&mut self, q: &[f64]) {
        assert_eq!(q.len(), self.continuous_dim(), "coordinate vector length");
        let mut o = 0;
        for k in 0..self.horizon() {
            let nx = self.states[k].dim();
            self.states[k].copy_from_slice(&q[o..o + nx]);
            o += nx;
            let np = self.params[k].dim();
            self.params[k].copy_from_slice(&q[o..o + np]);
            o += np;
            for c in self.hierarchies[k].components.iter_mut() {
                let d = c.mean.len();
                c.mean.copy_from_slice(&q[o..o + d]);
                let l = lower_from(&q[o + d..], d);
                c.cov = &l * l.transpose();
                o += 2 * d + d * (d - 1) / 2;
            }
        }
    }

    /// Model feeding the transition into step `k` (zero-based).
    fn source_model(&self, k: usize) -> ModelId {
        if k > 0 {
            self.models[k - 1]
        } else {
            self.anchor_model.unwrap_or(self.models[0])
        }
    }

    fn check(&self, ys: &[Vec<ObsVec>], bank: &ModelBank) {
        let k = self.horizon();
        assert!(
            self.models.len() == k && self.params.len() == k && self.hierarchies.len() == k && ys.len() == k,
            "chain state and measurements disagree on the horizon"
        );
        assert_eq!(
            self.anchor_state.dim(),
            bank.state_dim(),
            "anchor state dimension"
        );
        for i in 0..k {
            assert_eq!(self.states[i].dim(), bank.state_dim(), "state dimension");
            assert_eq!(self.params[i].dim(), bank.param_dim(), "parameter dimension");
            assert!(self.models[i].index() < bank.n_models(), "model index");
            assert_eq!(
                self.hierarchies[i].assignments.len(),
                ys[i].len(),
                "one assignment per measurement"
            );
        }
    }
}

/// Lower-triangular factor from `[log-diagonal, strict lower rows]`.
fn lower_from(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    let mut o = d;
    for i in 0..d {
        l[(i, i)] = v[i].exp();
        for j in 0..i {
            l[(i, j)] = v[o];
            o += 1;
        }
    }
    l
}

fn log_jump_in(cs: &ChainState, bank: &ModelBank, k: usize, to: ModelId) -> f64 {
    if k > 0 {
        bank.jump().log_jump_prob(cs.models[k - 1], to)
    } else {
        match cs.anchor_model {
            Some(m0) => bank.jump().log_jump_prob(m0, to),
            None => bank.initial_probs()[to.index()].ln(),
        }
    }
}

fn prev_state(cs: &ChainState, k: usize) -> &[f64] {
    if k > 0 {
        &cs.states[k - 1]
    } else {
        &cs.anchor_state
    }
}

/// Cholesky factor of the transition covariance, taken from a QR
/// factorization of the stacked scaled noise factors rather than from the
/// covariance itself. The accel-type blocks make the covariance nearly
/// singular, and squaring them first would lose half the digits of the
/// small pivots.
fn noise_chol(bank: &ModelBank, from: ModelId, to: ModelId, theta: &[f64]) -> Option<DMatrix<f64>> {
    let noise = bank.noise();
    let n = noise.state_dim();
    let mut cols = Vec::new();
    for (b, block) in noise.blocks().iter().enumerate() {
        let s = noise.block_scale(b, from, to, theta);
        if s != 0.0 {
            cols.push(&block.factor * s);
        }
    }
    let width: usize = cols.iter().map(|c| c.ncols()).sum();
    if width < n {
        return None;
    }
    let mut g = DMatrix::zeros(n, width);
    let mut o = 0;
    for c in cols {
        g.view_mut((0, o), (n, c.ncols())).copy_from(&c);
        o += c.ncols();
    }
    let mut l = g.transpose().qr().r().transpose();
    for j in 0..n {
        if l[(j, j)] < 0.0 {
            for i in j..n {
                l[(i, j)] = -l[(i, j)];
            }
        }
        if !(l[(j, j)] > 0.0) {
            return None;
        }
    }
    Some(l)
}

fn transition_term(
    bank: &ModelBank,
    from: ModelId,
    to: ModelId,
    x_prev: &[f64],
    x: &[f64],
    theta: &[f64],
) -> f64 {
    let nx = x.len();
    let mut mean = vec![0.0; nx];
    bank.motion().mean(from, to, x_prev, &mut mean);
    let Some(l) = noise_chol(bank, from, to, theta) else {
        return f64::NEG_INFINITY;
    };
    let e = DVector::from_iterator(nx, x.iter().zip(&mean).map(|(a, b)| a - b));
    let w = l.solve_lower_triangular(&e).expect("positive diagonal");
    -0.5 * w.norm_squared() - 0.5 * chol_log_det(&l) - 0.5 * nx as f64 * LN_2PI
}

fn niw_term(bank: &ModelBank, j: ModelId, h: &MeasurementHierarchy) -> f64 {
    h.components
        .iter()
        .map(|c| niw_log_density(c, bank.niw(j)).unwrap_or(f64::NEG_INFINITY))
        .sum()
}

fn mixture_term(x: &[f64], ys: &[ObsVec], bank: &ModelBank, h: &MeasurementHierarchy) -> f64 {
    let ny = bank.obs_dim();
    let mut pred = vec![0.0; ny];
    bank.observation().predict(x, &mut pred);
    let chols: Vec<Option<DMatrix<f64>>> = h
        .components
        .iter()
        .map(|c| cholesky(&c.cov, "component covariance").ok())
        .collect();
    let c_count = h.components.len();
    let mut lp = dirichlet_log_density(&h.weights, &vec![1.0 / c_count as f64; c_count]);
    for (y, &c) in ys.iter().zip(&h.assignments) {
        let Some(l) = &chols[c] else {
            return f64::NEG_INFINITY;
        };
        let e = DVector::from_iterator(ny, (0..ny).map(|i| y[i] - pred[i] - h.components[c].mean[i]));
        let w = l.solve_lower_triangular(&e).expect("positive diagonal");
        lp += h.weights[c].ln() - 0.5 * w.norm_squared() - 0.5 * chol_log_det(l) - 0.5 * ny as f64 * LN_2PI;
    }
    lp
}

/// Unnormalized log joint density of the chain state and the
/// measurements.
pub fn log_posterior(cs: &ChainState, ys: &[Vec<ObsVec>], bank: &ModelBank) -> f64 {
    cs.check(ys, bank);
    let np = bank.param_dim();
    let zero = vec![0.0; np];
    let mut lp = 0.0;
    for k in 0..cs.horizon() {
        let j = cs.models[k];
        lp += log_jump_in(cs, bank, k, j);
        let theta_prev = if k > 0 { cs.params[k - 1].as_slice() } else { &zero };
        lp += bank.jump().param_log_density(theta_prev, &cs.params[k]);
        lp += transition_term(
            bank,
            cs.source_model(k),
            j,
            prev_state(cs, k),
            &cs.states[k],
            &cs.params[k],
        );
        lp += niw_term(bank, j, &cs.hierarchies[k]);
        lp += mixture_term(&cs.states[k], &ys[k], bank, &cs.hierarchies[k]);
    }
    lp
}

/// Gradient of [`log_posterior`] with respect to the packed coordinates of
/// [`ChainState::pack`]. The Jacobian of the log-Cholesky map is not
/// included.
pub fn grad_log_posterior(cs: &ChainState, ys: &[Vec<ObsVec>], bank: &ModelBank) -> Vec<f64> {
    cs.check(ys, bank);
    let nx = bank.state_dim();
    let np = bank.param_dim();
    let ny = bank.obs_dim();
    let kk = cs.horizon();
    let mut g = vec![0.0; cs.continuous_dim()];
    // Offsets of every step's block.
    let mut offsets = Vec::with_capacity(kk);
    let mut o = 0;
    for k in 0..kk {
        offsets.push(o);
        o += nx + np;
        for c in &cs.hierarchies[k].components {
            let d = c.mean.len();
            o += 2 * d + d * (d - 1) / 2;
        }
    }
    let motion = bank.motion();
    let noise = bank.noise();
    let tau = bank.jump().tau();
    let carry = bank.jump().carry();
    let mut mean = vec![0.0; nx];
    let mut back = vec![0.0; nx];
    for k in 0..kk {
        let base = offsets[k];
        let (from, to) = (cs.source_model(k), cs.models[k]);
        let x_prev = prev_state(cs, k);
        let x = &cs.states[k];
        let theta = &cs.params[k];

        // Parameter kernel.
        if np > 0 && tau > 0.0 {
            let prev = if k > 0 {
                DVector::from_column_slice(&cs.params[k - 1])
            } else {
                DVector::zeros(np)
            };
            let r = (theta.to_dvector() - carry * prev) / (tau * tau);
            for i in 0..np {
                g[base + nx + i] -= r[i];
            }
            if k > 0 {
                let up = carry.transpose() * &r;
                let pb = offsets[k - 1] + nx;
                for i in 0..np {
                    g[pb + i] += up[i];
                }
            }
        }

        // Transition density.
        motion.mean(from, to, x_prev, &mut mean);
        if let Some(l) = noise_chol(bank, from, to, theta) {
            let e = DVector::from_iterator(nx, x.iter().zip(&mean).map(|(a, b)| a - b));
            let w = l.solve_lower_triangular(&e).expect("positive diagonal");
            let r = l
                .transpose()
                .solve_upper_triangular(&w)
                .expect("positive diagonal");
            for i in 0..nx {
                g[base + i] -= r[i];
            }
            if k > 0 {
                back.iter_mut().for_each(|v| *v = 0.0);
                motion.mean_vjp(from, to, x_prev, r.as_slice(), &mut back);
                let pb = offsets[k - 1];
                for i in 0..nx {
                    g[pb + i] += back[i];
                }
            }
            let l_inv = l
                .solve_lower_triangular(&DMatrix::identity(nx, nx))
                .expect("positive diagonal");
            for (b, block) in noise.blocks().iter().enumerate() {
                let Some(ti) = block.theta_index else {
                    continue;
                };
                let s = noise.block_scale(b, from, to, theta);
                if s == 0.0 {
                    continue;
                }
                let ftr = block.factor.transpose() * &r;
                let lf = &l_inv * &block.factor;
                g[base + nx + ti] += 0.5 * s * s * (ftr.norm_squared() - lf.norm_squared());
            }
        }

        // Measurement hierarchy.
        let h = &cs.hierarchies[k];
        let prior = bank.niw(to);
        let lambda = prior.scale();
        let nu = prior.dof();
        let m0 = prior.mean();
        let psi_l = prior.scale_matrix_chol();
        let mut pred = vec![0.0; ny];
        bank.observation().predict(x, &mut pred);
        let mut g_pred = vec![0.0; ny];
        let mut co = base + nx + np;
        for (c, comp) in h.components.iter().enumerate() {
            let d = comp.mean.len();
            let l = cholesky(&comp.cov, "component covariance").expect("positive definite");
            let k_inv = l
                .solve_lower_triangular(&DMatrix::identity(d, d))
                .expect("positive diagonal");
            let mut g_mu = DVector::<f64>::zeros(d);
            let mut g_l = DMatrix::<f64>::zeros(d, d);
            let mut n_c = 0.0;
            for (y, &a) in ys[k].iter().zip(&h.assignments) {
                if a != c {
                    continue;
                }
                n_c += 1.0;
                let e = DVector::from_iterator(d, (0..d).map(|i| y[i] - pred[i] - comp.mean[i]));
                let w = &k_inv * e;
                let v = k_inv.transpose() * &w;
                g_mu += &v;
                for i in 0..d {
                    g_pred[i] += v[i];
                }
                g_l += &v * w.transpose();
            }
            // NIW mean term.
            let u = DVector::from_iterator(d, (0..d).map(|i| comp.mean[i] - m0[i]));
            let w = &k_inv * u;
            let v = k_inv.transpose() * &w;
            g_mu -= &v * lambda;
            g_l += &v * w.transpose() * lambda;
            // Inverse-Wishart term.
            let mm = &k_inv * psi_l;
            g_l += k_inv.transpose() * &mm * mm.transpose();
            for i in 0..d {
                g_l[(i, i)] -= (n_c + 1.0 + nu + d as f64 + 1.0) / l[(i, i)];
            }
            for i in 0..d {
                g[co + i] += g_mu[i];
            }
            for i in 0..d {
                g[co + d + i] += g_l[(i, i)] * l[(i, i)];
            }
            let mut off = co + 2 * d;
            for i in 0..d {
                for j in 0..i {
                    g[off] += g_l[(i, j)];
                    off += 1;
                }
            }
            co += 2 * d + d * (d - 1) / 2;
        }
        back.iter_mut().for_each(|v| *v = 0.0);
        bank.observation().vjp(x, &g_pred, &mut back);
        for i in 0..nx {
            g[base + i] += back[i];
        }
    }
    g
}

/// `log |d Sigma / d(s, off)|` summed over components, and its gradient
/// added into `grad`.
fn log_cholesky_jacobian(cs: &ChainState, q: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let mut lj = 0.0;
    let mut grad = grad;
    let mut o = 0;
    for k in 0..cs.horizon() {
        o += cs.states[k].dim() + cs.params[k].dim();
        for c in &cs.hierarchies[k].components {
            let d = c.mean.len();
            for i in 0..d {
                let coef = (d - i + 1) as f64;
                lj += coef * q[o + d + i];
                if let Some(g) = grad.as_deref_mut() {
                    g[o + d + i] += coef;
                }
            }
            lj += d as f64 * core::f64::consts::LN_2;
            o += 2 * d + d * (d - 1) / 2;
        }
    }
    lj
}

/// HMC target over the packed coordinates with the discrete variables
/// frozen.
#[derive(Debug, Clone)]
pub struct TrajectoryTarget<'a> {
    pub state: ChainState,
    ys: &'a [Vec<ObsVec>],
    bank: &'a ModelBank,
}

impl<'a> TrajectoryTarget<'a> {
    pub fn new(state: ChainState, ys: &'a [Vec<ObsVec>], bank: &'a ModelBank) -> Self {
        state.check(ys, bank);
        TrajectoryTarget { state, ys, bank }
    }
}

impl Potential for TrajectoryTarget<'_> {
    fn dim(&self) -> usize {
        self.state.continuous_dim()
    }

    fn log_density_grad(&mut self, q: &[f64], grad: &mut [f64]) -> f64 {
        if q.iter().any(|v| !v.is_finite()) {
            return f64::NAN;
        }
        self.state.unpack(q);
        let lp = log_posterior(&self.state, self.ys, self.bank);
        if !lp.is_finite() {
            return lp;
        }
        grad.copy_from_slice(&grad_log_posterior(&self.state, self.ys, self.bank));
        lp + log_cholesky_jacobian(&self.state, q, Some(grad))
    }
}

/// One HMC transition over every continuous coordinate with the models,
/// labels and weights held fixed.
pub fn hmc_update<R: Rng + ?Sized>(
    cs: &mut ChainState,
    cfg: &SamplerConfig,
    ys: &[Vec<ObsVec>],
    bank: &ModelBank,
    rng: &mut R,
) -> Transition {
    let q0 = cs.pack();
    let mut hmc = Hmc::new(q0.len(), cfg.step_size, cfg.leapfrog_steps);
    if let Some(m) = &cfg.mass {
        hmc = hmc.with_mass(m);
    }
    let mut target = TrajectoryTarget::new(cs.clone(), ys, bank);
    let mut state = HmcState::new(&mut target, q0);
    let tr = hmc.transition(&mut target, &mut state, rng);
    cs.unpack(&state.q);
    tr
}

/// Unnormalized log conditional of `M_k = j` (zero-based `k`): the two
/// jump factors, the transitions into and out of step `k`, and the
/// measurement prior at step `k`.
pub fn model_log_conditional(cs: &ChainState, bank: &ModelBank, k: usize, j: ModelId) -> f64 {
    let mut lp = log_jump_in(cs, bank, k, j);
    let from = if k == 0 && cs.anchor_model.is_none() {
        j
    } else {
        cs.source_model(k)
    };
    lp += transition_term(bank, from, j, prev_state(cs, k), &cs.states[k], &cs.params[k]);
    if k + 1 < cs.horizon() {
        let next = cs.models[k + 1];
        lp += bank.jump().log_jump_prob(j, next);
        lp += transition_term(bank, j, next, &cs.states[k], &cs.states[k + 1], &cs.params[k + 1]);
    }
    lp + niw_term(bank, j, &cs.hierarchies[k])
}

/// Normalized conditional of `M_k` over the bank.
pub fn model_conditional(cs: &ChainState, bank: &ModelBank, k: usize) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = bank
        .models()
        .map(|j| model_log_conditional(cs, bank, k, j))
        .collect();
    if !normalize_log_weights(&mut w) {
        return Err(Error::Sampler {
            step: k + 1,
            reason: alloc::format!(
                "every model has zero conditional probability (state {:?}, neighbours {:?})",
                cs.states[k].as_slice(),
                (k.checked_sub(1).map(|p| cs.models[p]), cs.models.get(k + 1))
            ),
        });
    }
    Ok(w)
}

/// Sequential sweep redrawing each `M_k` from its full conditional.
pub fn gibbs_model_update<R: Rng + ?Sized>(
    cs: &mut ChainState,
    ys: &[Vec<ObsVec>],
    bank: &ModelBank,
    rng: &mut R,
) -> Result<()> {
    cs.check(ys, bank);
    if bank.n_models() == 1 {
        return Ok(());
    }
    for k in 0..cs.horizon() {
        let p = model_conditional(cs, bank, k)?;
        cs.models[k] = ModelId::from_index(sample_categorical(rng, &p));
        cs.hierarchies[k].niw_prior = bank.niw(cs.models[k]).clone();
    }
    Ok(())
}

/// Redraws every label from its categorical conditional and then the
/// weights from `Dir(1/C + n)`.
pub fn gibbs_cluster_update<R: Rng + ?Sized>(
    cs: &mut ChainState,
    ys: &[Vec<ObsVec>],
    bank: &ModelBank,
    rng: &mut R,
) {
    cs.check(ys, bank);
    let ny = bank.obs_dim();
    let mut pred = vec![0.0; ny];
    for k in 0..cs.horizon() {
        let h = &mut cs.hierarchies[k];
        let c_count = h.components.len();
        bank.observation().predict(&cs.states[k], &mut pred);
        let chols: Vec<DMatrix<f64>> = h
            .components
            .iter()
            .map(|c| cholesky(&c.cov, "component covariance").expect("positive definite"))
            .collect();
        let mut counts = vec![0.0; c_count];
        for (m, y) in ys[k].iter().enumerate() {
            let mut w: Vec<f64> = (0..c_count)
                .map(|c| {
                    let comp: &GmmComponent = &h.components[c];
                    let e = DVector::from_iterator(ny, (0..ny).map(|i| y[i] - pred[i] - comp.mean[i]));
                    let z = chols[c].solve_lower_triangular(&e).expect("positive diagonal");
                    h.weights[c].ln() - 0.5 * z.norm_squared() - 0.5 * chol_log_det(&chols[c])
                })
                .collect();
            let c = if normalize_log_weights(&mut w) {
                sample_categorical(rng, &w)
            } else {
                h.assignments[m]
            };
            h.assignments[m] = c;
            counts[c] += 1.0;
        }
        let alpha: Vec<f64> = counts.iter().map(|n| 1.0 / c_count as f64 + n).collect();
        h.weights = sample_dirichlet(&alpha, rng);
    }
}
