//! Per-step posterior in whitened coordinates.
//!
//! At step `k` the sampler works on the model pair `(a, j) = (M_{k-1}, M_k)`
//! and on coordinates that keep their meaning across model pairs:
//!
//! * `xi`: whitened `(u, z)`, where `x_{k-1} = m_a + L_a u` under the
//!   previous-step summary of model `a`, and `z` is the stacked process
//!   noise, `x_k = g_{a,j}(x_{k-1}) + N_{a,j}(theta) z`. For each pair,
//!   `(u, z) = c_{aj} + S_{aj} xi` with `(c, S S^T)` a Gauss-Newton
//!   Laplace fit of the pair's posterior, so `xi` is close to standard
//!   normal under every pair;
//! * `theta_w`: whitened transition parameters,
//!   `theta = mean_a + C_a theta_w`;
//! * per mixture component, `(eta, s, off)`: `Sigma = (B_j Lr)(B_j Lr)^T`
//!   with `B_j = chol(Psi_j)`, `Lr` lower triangular with diagonal
//!   `exp(s)` and strict lower part `off`, and
//!   `mu = m_j + B_j Lr eta / sqrt(lambda_j)`. Under the prior,
//!   `eta ~ N(0, I)` and `Lr Lr^T ~ IW(I, nu_j)` whatever the model.
//!
//! Because every pair maps the same coordinates onto its own natural
//! variables, the pair can be redrawn from its exact conditional given the
//! coordinates (the constant Jacobian `|det S_aj|` included), which lets
//! the chain move between models whose parameters differ a lot.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::hmc::Potential;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, ln_multigamma, sample_categorical, to_row_major, tri, LN_2PI};
use crate::model::{noise_factor, ModelBank, ModelId, ObsVec};
#[allow(unused_imports)]
use num_traits::Float;

/// Gaussian summary of the previous step restricted to one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub weight: f64,
    pub state_mean: Vec<f64>,
    pub state_cov: DMatrix<f64>,
    pub param_mean: Vec<f64>,
    pub param_cov: DMatrix<f64>,
}

/// Previous-step summaries, one per model of the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPrior {
    pub models: Vec<ModelSummary>,
}

/// Pseudo-count pulling a model's moments toward the pooled moments.
const SHRINK: f64 = 2.0;
/// Pseudo-count added to every model's weight.
const WEIGHT_FLOOR: f64 = 0.5;

impl StepPrior {
    /// Prior before the first step: the initial-state Gaussian, zero
    /// transition parameters and the bank's initial model probabilities.
    pub fn initial(bank: &ModelBank, mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let nx = bank.state_dim();
        if mean.len() != nx || cov.nrows() != nx || cov.ncols() != nx {
            return Err(Error::dim("initial state prior", nx, mean.len()));
        }
        let np = bank.param_dim();
        Ok(StepPrior {
            models: bank
                .initial_probs()
                .iter()
                .map(|&w| ModelSummary {
                    weight: w,
                    state_mean: mean.to_vec(),
                    state_cov: cov.clone(),
                    param_mean: vec![0.0; np],
                    param_cov: DMatrix::zeros(np, np),
                })
                .collect(),
        })
    }

    /// Moment-matches retained draws grouped by model. Sparse groups are
    /// shrunk toward the pooled moments and every model keeps a small
    /// weight so later data can still revive it.
    pub fn from_samples(n_models: usize, samples: &StepSamples) -> Self {
        let n = samples.len();
        let (nx, np) = (samples.state_dim, samples.param_dim);
        let pooled_x = moments(samples.states.chunks(nx.max(1)).take(n), nx);
        let pooled_t = moments(samples.params.chunks(np.max(1)).take(n), np);
        let mut models = Vec::with_capacity(n_models);
        let total = n as f64 + WEIGHT_FLOOR * n_models as f64;
        for j in 0..n_models {
            let idx: Vec<usize> = (0..n).filter(|&i| samples.models[i].index() == j).collect();
            let cnt = idx.len() as f64;
            let gx = moments(idx.iter().map(|&i| samples.state(i)), nx);
            let gt = moments(idx.iter().map(|&i| samples.param(i)), np);
            let (state_mean, state_cov) = shrink(&gx, &pooled_x, cnt);
            let (param_mean, param_cov) = shrink(&gt, &pooled_t, cnt);
            models.push(ModelSummary {
                weight: (cnt + WEIGHT_FLOOR) / total,
                state_mean,
                state_cov,
                param_mean,
                param_cov,
            });
        }
        StepPrior { models }
    }
}

fn moments<'a>(rows: impl Iterator<Item = &'a [f64]>, d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let rows: Vec<&[f64]> = rows.collect();
    let mut mean = vec![0.0; d];
    let mut cov = DMatrix::zeros(d, d);
    if rows.is_empty() || d == 0 {
        return (mean, cov);
    }
    let n = rows.len() as f64;
    for r in &rows {
        for i in 0..d {
            mean[i] += r[i] / n;
        }
    }
    for r in &rows {
        for i in 0..d {
            for k in 0..d {
                cov[(i, k)] += (r[i] - mean[i]) * (r[k] - mean[k]) / n;
            }
        }
    }
    (mean, cov)
}

fn shrink(
    group: &(Vec<f64>, DMatrix<f64>),
    pooled: &(Vec<f64>, DMatrix<f64>),
    count: f64,
) -> (Vec<f64>, DMatrix<f64>) {
    let w = count / (count + SHRINK);
    let mean: Vec<f64> = group
        .0
        .iter()
        .zip(&pooled.0)
        .map(|(g, p)| w * g + (1.0 - w) * p)
        .collect();
    let d = mean.len();
    let mut cov = &group.1 * w + &pooled.1 * (1.0 - w);
    // Spread between the group and pooled means.
    for i in 0..d {
        for k in 0..d {
            cov[(i, k)] += w * (1.0 - w) * (group.0[i] - pooled.0[i]) * (group.0[k] - pooled.0[k]);
        }
    }
    (mean, cov)
}

/// Post-burn-in draws of one step, stored flat.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepSamples {
    pub state_dim: usize,
    pub param_dim: usize,
    pub models: Vec<ModelId>,
    pub prev_models: Vec<ModelId>,
    pub states: Vec<f64>,
    pub params: Vec<f64>,
}

impl StepSamples {
    pub fn new(state_dim: usize, param_dim: usize, capacity: usize) -> Self {
        StepSamples {
            state_dim,
            param_dim,
            models: Vec::with_capacity(capacity),
            prev_models: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity * state_dim),
            params: Vec::with_capacity(capacity * param_dim),
        }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn param(&self, i: usize) -> &[f64] {
        &self.params[i * self.param_dim..(i + 1) * self.param_dim]
    }

    pub fn push(&mut self, prev: ModelId, model: ModelId, state: &[f64], param: &[f64]) {
        self.prev_models.push(prev);
        self.models.push(model);
        self.states.extend_from_slice(state);
        self.params.extend_from_slice(param);
    }
}

#[derive(Debug, Clone)]
struct PrevSetup {
    mean: Vec<f64>,
    chol: Vec<f64>,
    theta_mean: Vec<f64>,
    theta_chol: Vec<f64>,
}

#[derive(Debug, Clone)]
struct MeasSetup {
    psi_chol: Vec<f64>,
    mean: Vec<f64>,
    inv_sqrt_lambda: f64,
    nu: f64,
    /// Normalizing constant of one component's reference prior.
    component_const: f64,
    noise_chol: Vec<f64>,
}

#[derive(Debug, Clone)]
struct PairSetup {
    log_const: f64,
    center: Vec<f64>,
    sqrt: Vec<f64>,
}

/// Sufficient statistics of the measurements assigned to one component.
#[derive(Debug, Clone)]
struct ClusterStats {
    count: f64,
    mean: Vec<f64>,
    scatter: Vec<f64>,
}

/// The step-`k` target over whitened coordinates for a fixed model pair
/// and fixed cluster labels.
#[derive(Debug, Clone)]
pub struct StepTarget<'a> {
    bank: &'a ModelBank,
    learn_transition: bool,
    learn_measurement: bool,
    nx: usize,
    nz: usize,
    np: usize,
    ny: usize,
    n_clusters: usize,
    prev: Vec<PrevSetup>,
    meas: Vec<MeasSetup>,
    pairs: Vec<PairSetup>,
    ys: Vec<f64>,
    pub prev_model: ModelId,
    pub model: ModelId,
    assignments: Vec<usize>,
    weights: Vec<f64>,
    stats: Vec<ClusterStats>,
    s: Scratch,
}

#[derive(Debug, Clone)]
struct Scratch {
    w: Vec<f64>,
    gw: Vec<f64>,
    tmp: Vec<f64>,
    x_prev: Vec<f64>,
    x: Vec<f64>,
    theta: Vec<f64>,
    g_theta: Vec<f64>,
    pred: Vec<f64>,
    g_pred: Vec<f64>,
    g_x: Vec<f64>,
    g_xprev: Vec<f64>,
    lr: Vec<f64>,
    lr_inv: Vec<f64>,
    l: Vec<f64>,
    l_inv: Vec<f64>,
    mu: Vec<f64>,
    e: Vec<f64>,
    v: Vec<f64>,
    ks: Vec<f64>,
    p: Vec<f64>,
    gl: Vec<f64>,
    glr: Vec<f64>,
}

impl<'a> StepTarget<'a> {
    /// Prepares the target for measurement set `ys` given the previous-step
    /// summaries. `n_clusters` is ignored (taken as 1) when the mixture is
    /// not learned.
    pub fn new(
        bank: &'a ModelBank,
        prior: &StepPrior,
        ys: &[ObsVec],
        n_clusters: usize,
        learn_transition: bool,
        learn_measurement: bool,
    ) -> Result<Self> {
        let l = bank.n_models();
        if prior.models.len() != l {
            return Err(Error::dim("step prior models", l, prior.models.len()));
        }
        let nx = bank.state_dim();
        let nz = bank.noise().noise_dim();
        let np = bank.param_dim();
        let ny = bank.obs_dim();
        if ys.iter().any(|y| y.dim() != ny) {
            return Err(Error::dim(
                "measurement",
                ny,
                ys.iter().map(|y| y.dim()).find(|d| *d != ny).unwrap_or(ny),
            ));
        }
        let n_clusters = if learn_measurement { n_clusters.max(1) } else { 1 };
        let tau = bank.jump().tau();
        let carry = bank.jump().carry();

        let mut prev = Vec::with_capacity(l);
        for m in &prior.models {
            let chol = robust_factor(&m.state_cov, "previous-state covariance")?;
            let (theta_mean, theta_chol) = if learn_transition {
                let mean = carry * DVector::from_column_slice(&m.param_mean);
                let mut cov = carry * &m.param_cov * carry.transpose();
                for i in 0..np {
                    cov[(i, i)] += tau * tau;
                }
                (
                    mean.as_slice().to_vec(),
                    to_row_major(&robust_factor(&cov, "parameter prior")?),
                )
            } else {
                (vec![0.0; np], vec![0.0; np * np])
            };
            prev.push(PrevSetup {
                mean: m.state_mean.clone(),
                chol: to_row_major(&chol),
                theta_mean,
                theta_chol,
            });
        }

        let d = ny as f64;
        let meas = bank
            .models()
            .map(|j| {
                let niw = bank.niw(j);
                let nu = niw.dof();
                // log N(eta; 0, I) + log IW(.; I, nu) + Cholesky Jacobian
                // constants.
                let component_const =
                    -0.5 * d * LN_2PI - 0.5 * nu * d * core::f64::consts::LN_2 - ln_multigamma(ny, 0.5 * nu)
                        + d * core::f64::consts::LN_2;
                MeasSetup {
                    psi_chol: to_row_major(niw.scale_matrix_chol()),
                    mean: niw.mean().to_vec(),
                    inv_sqrt_lambda: 1.0 / niw.scale().sqrt(),
                    nu,
                    component_const,
                    noise_chol: to_row_major(bank.measurement_kernel(j).noise_chol()),
                }
            })
            .collect();

        let flat: Vec<f64> = ys.iter().flat_map(|y| y.iter().copied()).collect();
        let mut target = StepTarget {
            bank,
            learn_transition,
            learn_measurement,
            nx,
            nz,
            np,
            ny,
            n_clusters,
            prev,
            meas,
            pairs: Vec::new(),
            ys: flat,
            prev_model: ModelId::from_index(0),
            model: ModelId::from_index(0),
            assignments: (0..ys.len()).map(|m| m % n_clusters).collect(),
            weights: vec![1.0 / n_clusters as f64; n_clusters],
            stats: Vec::new(),
            s: Scratch::new(nx, nz, np, ny),
        };
        target.pairs = target.laplace_pairs(prior, ys)?;
        target.update_stats();
        Ok(target)
    }

    pub fn n_models(&self) -> usize {
        self.bank.n_models()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn n_measurements(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_clusters(&mut self, assignments: Vec<usize>, weights: Vec<f64>) {
        debug_assert_eq!(assignments.len(), self.assignments.len());
        self.assignments = assignments;
        self.weights = weights;
        self.update_stats();
    }

    /// Length of the whitened noise block.
    pub fn xi_dim(&self) -> usize {
        self.nx + self.nz
    }

    fn theta_offset(&self) -> usize {
        self.xi_dim()
    }

    fn phi_offset(&self) -> usize {
        self.xi_dim() + if self.learn_transition { self.np } else { 0 }
    }

    fn component_stride(&self) -> usize {
        let d = self.ny;
        2 * d + d * (d - 1) / 2
    }

    pub fn dim(&self) -> usize {
        self.phi_offset()
            + if self.learn_measurement {
                self.n_clusters * self.component_stride()
            } else {
                0
            }
    }

    /// Starting point: Laplace centers, prior-mean parameters, and
    /// components at the reference inverse-Wishart mean.
    pub fn initial_point(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.dim()];
        if self.learn_measurement {
            let d = self.ny;
            let stride = self.component_stride();
            for c in 0..self.n_clusters {
                let base = self.phi_offset() + c * stride + d;
                let nu = self.meas[self.model.index()].nu;
                let s0 = -0.5 * (nu - d as f64 - 1.0).max(1.0).ln();
                for i in 0..d {
                    q[base + i] = s0;
                }
            }
        }
        q
    }

    fn update_stats(&mut self) {
        let ny = self.ny;
        let mut stats = vec![
            ClusterStats {
                count: 0.0,
                mean: vec![0.0; ny],
                scatter: vec![0.0; ny * ny],
            };
            self.n_clusters
        ];
        for (m, &c) in self.assignments.iter().enumerate() {
            let y = &self.ys[m * ny..(m + 1) * ny];
            let st = &mut stats[c];
            st.count += 1.0;
            for i in 0..ny {
                st.mean[i] += (y[i] - st.mean[i]) / st.count;
            }
        }
        for (m, &c) in self.assignments.iter().enumerate() {
            let y = &self.ys[m * ny..(m + 1) * ny];
            let st = &mut stats[c];
            for i in 0..ny {
                for k in 0..ny {
                    st.scatter[i * ny + k] += (y[i] - st.mean[i]) * (y[k] - st.mean[k]);
                }
            }
        }
        self.stats = stats;
    }

    /// Gauss-Newton Laplace fit of every model pair in `(u, z)` space with
    /// the parameters at their prior mean and the nominal noise.
    fn laplace_pairs(&self, prior: &StepPrior, ys: &[ObsVec]) -> Result<Vec<PairSetup>> {
        let l = self.n_models();
        let dd = self.xi_dim();
        let m_count = ys.len() as f64;
        let mut ybar = vec![0.0; self.ny];
        for y in ys {
            for i in 0..self.ny {
                ybar[i] += y[i] / m_count.max(1.0);
            }
        }
        let mut pairs = Vec::with_capacity(l * l);
        for a in 0..l {
            for j in 0..l {
                let (ma, mj) = (ModelId::from_index(a), ModelId::from_index(j));
                let log_w = prior.models[a].weight.ln() + self.bank.jump().log_jump_prob(ma, mj);
                if !log_w.is_finite() {
                    pairs.push(PairSetup {
                        log_const: f64::NEG_INFINITY,
                        center: vec![0.0; dd],
                        sqrt: identity_rows(dd),
                    });
                    continue;
                }
                let (center, sqrt, log_det) = self
                    .laplace(a, j, &ybar, m_count)
                    .unwrap_or_else(|| (vec![0.0; dd], identity_rows(dd), 0.0));
                pairs.push(PairSetup {
                    log_const: log_w + log_det,
                    center,
                    sqrt,
                });
            }
        }
        Ok(pairs)
    }

    fn laplace(&self, a: usize, j: usize, ybar: &[f64], m_count: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let (nx, nz, ny) = (self.nx, self.nz, self.ny);
        let dd = nx + nz;
        let (ma, mj) = (ModelId::from_index(a), ModelId::from_index(j));
        let prev = &self.prev[a];
        let la = DMatrix::from_row_slice(nx, nx, &prev.chol);
        let theta = &prev.theta_mean;
        let r_chol = self.bank.measurement_kernel(mj).noise_chol().clone();
        if (0..ny).any(|i| r_chol[(i, i)] <= 0.0) {
            return None;
        }
        let r_inv = {
            let li = r_chol.clone().try_inverse()?;
            li.transpose() * li
        };
        let motion = self.bank.motion();
        let obs = self.bank.observation();
        let noise = self.bank.noise();
        let mut nmat = DMatrix::zeros(nx, nz);
        let mut unit = vec![0.0; nz];
        let mut col = vec![0.0; nx];
        for c in 0..nz {
            unit[c] = 1.0;
            col.iter_mut().for_each(|v| *v = 0.0);
            noise.apply(ma, mj, theta, &unit, &mut col);
            unit[c] = 0.0;
            for r in 0..nx {
                nmat[(r, c)] = col[r];
            }
        }
        let ybar = DVector::from_column_slice(ybar);
        let forward = |w: &DVector<f64>| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
            let u = w.rows(0, nx).into_owned();
            let z = w.rows(nx, nz).into_owned();
            let x_prev = DVector::from_column_slice(&prev.mean) + &la * &u;
            let mut x = vec![0.0; nx];
            motion.mean(ma, mj, x_prev.as_slice(), &mut x);
            let x = DVector::from_vec(x) + &nmat * z;
            let mut pred = vec![0.0; ny];
            obs.predict(x.as_slice(), &mut pred);
            (x_prev, x, DVector::from_vec(pred))
        };
        let objective = |w: &DVector<f64>| -> f64 {
            let (_, _, pred) = forward(w);
            let r = &ybar - pred;
            0.5 * w.norm_squared() + 0.5 * m_count * (r.transpose() * &r_inv * &r)[(0, 0)]
        };
        let hessian_grad = |w: &DVector<f64>| -> (DMatrix<f64>, DVector<f64>) {
            let (x_prev, x, pred) = forward(w);
            let jg = motion.jacobian(ma, mj, x_prev.as_slice());
            let jt = obs.jacobian(x.as_slice());
            let mut dxdw = DMatrix::zeros(nx, dd);
            dxdw.view_mut((0, 0), (nx, nx)).copy_from(&(&jg * &la));
            dxdw.view_mut((0, nx), (nx, nz)).copy_from(&nmat);
            let a_mat = jt * dxdw;
            let h = DMatrix::identity(dd, dd) + a_mat.transpose() * &r_inv * &a_mat * m_count;
            let g = w - a_mat.transpose() * &r_inv * (&ybar - pred) * m_count;
            (h, g)
        };
        let mut w = DVector::zeros(dd);
        let mut f = objective(&w);
        for _ in 0..50 {
            let (h, g) = hessian_grad(&w);
            let step = h.cholesky()?.solve(&g);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let cand = &w - &step * t;
                let fc = objective(&cand);
                if fc.is_finite() && fc <= f {
                    w = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved || (&step * t).norm() <= 1e-10 * (1.0 + w.norm()) {
                break;
            }
        }
        let (h, _) = hessian_grad(&w);
        let lh = h.cholesky()?.unpack();
        let lh_inv = lh.clone().try_inverse()?;
        let sqrt = lh_inv.transpose();
        let log_det = -(0..dd).map(|i| lh[(i, i)].ln()).sum::<f64>();
        if !log_det.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((w.as_slice().to_vec(), to_row_major(&sqrt), log_det))
    }

    /// Log density for pair `(a, j)` at `q`; fills `grad` when given.
    pub fn eval(&mut self, q: &[f64], a: usize, j: usize, mut grad: Option<&mut [f64]>) -> f64 {
        let l = self.n_models();
        let (nx, nz, np, ny) = (self.nx, self.nz, self.np, self.ny);
        let dd = nx + nz;
        let pair = &self.pairs[a * l + j];
        if !pair.log_const.is_finite() {
            if let Some(g) = grad.as_deref_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            return f64::NEG_INFINITY;
        }
        let (ma, mj) = (ModelId::from_index(a), ModelId::from_index(j));
        let th_off = self.theta_offset();
        let phi_off = self.phi_offset();
        let s = &mut self.s;
        let xi = &q[..dd];
        for r in 0..dd {
            let row = &pair.sqrt[r * dd..(r + 1) * dd];
            let mut acc = pair.center[r];
            for c in 0..dd {
                acc += row[c] * xi[c];
            }
            s.w[r] = acc;
        }
        let mut logp = pair.log_const - 0.5 * s.w.iter().map(|v| v * v).sum::<f64>();

        let prev = &self.prev[a];
        tri::mul(&prev.chol, nx, &s.w[..nx], &mut s.tmp);
        for i in 0..nx {
            s.x_prev[i] = prev.mean[i] + s.tmp[i];
        }
        if self.learn_transition {
            let tw = &q[th_off..th_off + np];
            tri::mul(&prev.theta_chol, np, tw, &mut s.theta);
            for i in 0..np {
                s.theta[i] += prev.theta_mean[i];
            }
            logp -= 0.5 * tw.iter().map(|v| v * v).sum::<f64>();
        } else {
            s.theta.iter_mut().for_each(|v| *v = 0.0);
        }
        let motion = self.bank.motion();
        let noise = self.bank.noise();
        let obs = self.bank.observation();
        motion.mean(ma, mj, &s.x_prev, &mut s.x);
        noise.apply(ma, mj, &s.theta, &s.w[nx..], &mut s.x);
        obs.predict(&s.x, &mut s.pred);
        s.g_pred.iter_mut().for_each(|v| *v = 0.0);

        let meas = &self.meas[j];
        let d = ny;
        if self.learn_measurement {
            let stride = 2 * d + d * (d - 1) / 2;
            let nu = meas.nu;
            let isl = meas.inv_sqrt_lambda;
            for c in 0..self.n_clusters {
                let base = phi_off + c * stride;
                let eta = &q[base..base + d];
                let sdiag = &q[base + d..base + 2 * d];
                let off = &q[base + 2 * d..base + stride];
                fill_lower(sdiag, off, d, &mut s.lr);
                tri::inverse(&s.lr, d, &mut s.lr_inv);
                tri::matmul(&meas.psi_chol, &s.lr, d, &mut s.l);
                tri::mul(&s.l, d, eta, &mut s.mu);
                for i in 0..d {
                    s.mu[i] = meas.mean[i] + isl * s.mu[i];
                }
                logp += meas.component_const - 0.5 * eta.iter().map(|v| v * v).sum::<f64>();
                let mut fro = 0.0;
                for i in 0..d {
                    logp += (-(nu + d as f64 + 1.0) + (d - i + 1) as f64) * sdiag[i];
                    for k in 0..=i {
                        fro += s.lr_inv[i * d + k] * s.lr_inv[i * d + k];
                    }
                }
                logp -= 0.5 * fro;
                let st = &self.stats[c];
                if st.count > 0.0 {
                    logp += gaussian_stats_term(st, d, s, grad.is_some());
                }
                if let Some(g) = grad.as_deref_mut() {
                    // s.v and s.gl hold the likelihood pieces when count > 0.
                    if st.count > 0.0 {
                        for i in 0..d {
                            s.g_pred[i] += st.count * s.v[i];
                        }
                        for i in 0..d {
                            for k in 0..=i {
                                s.gl[i * d + k] += st.count * s.v[i] * eta[k] * isl;
                            }
                        }
                    } else {
                        s.gl.iter_mut().for_each(|v| *v = 0.0);
                        s.v.iter_mut().for_each(|v| *v = 0.0);
                    }
                    // d/d eta = L^T (n v) / sqrt(lambda) - eta.
                    for k in 0..d {
                        let mut acc = 0.0;
                        for i in k..d {
                            acc += s.l[i * d + k] * s.v[i];
                        }
                        g[base + k] = st.count * acc * isl - eta[k];
                    }
                    tri::pullback_left(&meas.psi_chol, &s.gl, d, &mut s.glr);
                    // Reference inverse-Wishart: + tril(K^T K K^T), K = Lr^{-1}.
                    for i in 0..d {
                        for k in 0..=i {
                            let mut acc = 0.0;
                            for r in 0..d {
                                // (K^T K K^T)_{ik} = sum_r (K^T K)_{ir} K_{kr}
                                let mut ktk = 0.0;
                                for t in i.max(r)..d {
                                    ktk += s.lr_inv[t * d + i] * s.lr_inv[t * d + r];
                                }
                                if r <= k {
                                    acc += ktk * s.lr_inv[k * d + r];
                                }
                            }
                            s.glr[i * d + k] += acc;
                        }
                    }
                    let mut o = 0;
                    for i in 0..d {
                        let lii = s.lr[i * d + i];
                        g[base + d + i] = s.glr[i * d + i] * lii - (nu + d as f64 + 1.0) + (d - i + 1) as f64;
                        for k in 0..i {
                            g[base + 2 * d + o] = s.glr[i * d + k];
                            o += 1;
                        }
                    }
                }
            }
        } else {
            let st = &self.stats[0];
            s.mu.iter_mut().for_each(|v| *v = 0.0);
            let chol = &meas.noise_chol;
            s.l.copy_from_slice(chol);
            if st.count > 0.0 {
                logp += gaussian_stats_term(st, d, s, false);
                for i in 0..d {
                    s.g_pred[i] += st.count * s.v[i];
                }
            }
        }

        let Some(g) = grad else {
            return logp;
        };
        s.g_x.iter_mut().for_each(|v| *v = 0.0);
        obs.vjp(&s.x, &s.g_pred, &mut s.g_x);
        s.gw.iter_mut().for_each(|v| *v = 0.0);
        s.g_theta.iter_mut().for_each(|v| *v = 0.0);
        {
            let (gu, gz) = s.gw.split_at_mut(nx);
            noise.apply_vjp(
                ma,
                mj,
                &s.theta,
                &s.w[nx..],
                &s.g_x,
                gz,
                if self.learn_transition {
                    Some(&mut s.g_theta)
                } else {
                    None
                },
            );
            s.g_xprev.iter_mut().for_each(|v| *v = 0.0);
            motion.mean_vjp(ma, mj, &s.x_prev, &s.g_x, &mut s.g_xprev);
            tri::mul_t_add(&prev.chol, nx, &s.g_xprev, gu);
        }
        for r in 0..dd {
            s.gw[r] -= s.w[r];
        }
        for c in 0..dd {
            g[c] = 0.0;
        }
        for r in 0..dd {
            let row = &pair.sqrt[r * dd..(r + 1) * dd];
            let gr = s.gw[r];
            for c in 0..dd {
                g[c] += row[c] * gr;
            }
        }
        if self.learn_transition {
            let tw = &q[th_off..th_off + np];
            for i in 0..np {
                g[th_off + i] = -tw[i];
            }
            tri::mul_t_add(&prev.theta_chol, np, &s.g_theta, &mut g[th_off..th_off + np]);
        }
        logp
    }

    /// Natural state `x_k`, parameters `theta_k` and previous state for
    /// the current pair at `q`.
    pub fn natural(&mut self, q: &[f64]) -> (&[f64], &[f64], &[f64]) {
        let (a, j) = (self.prev_model.index(), self.model.index());
        self.eval(q, a, j, None);
        (&self.s.x, &self.s.theta, &self.s.x_prev)
    }

    /// Natural mixture components `(mu_l, Sigma_l chol)` for model `j`.
    pub fn components(&self, q: &[f64], j: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let d = self.ny;
        let meas = &self.meas[j];
        if !self.learn_measurement {
            return vec![(vec![0.0; d], meas.noise_chol.clone())];
        }
        let stride = self.component_stride();
        (0..self.n_clusters)
            .map(|c| {
                let base = self.phi_offset() + c * stride;
                let mut lr = vec![0.0; d * d];
                fill_lower(
                    &q[base + d..base + 2 * d],
                    &q[base + 2 * d..base + stride],
                    d,
                    &mut lr,
                );
                let mut l = vec![0.0; d * d];
                tri::matmul(&meas.psi_chol, &lr, d, &mut l);
                let mut mu = vec![0.0; d];
                tri::mul(&l, d, &q[base..base + d], &mut mu);
                for i in 0..d {
                    mu[i] = meas.mean[i] + meas.inv_sqrt_lambda * mu[i];
                }
                (mu, l)
            })
            .collect()
    }

    /// Unnormalized log probabilities of every pair `(a, j)` at `q`,
    /// row-major in `a`.
    pub fn pair_log_weights(&mut self, q: &[f64]) -> Vec<f64> {
        let l = self.n_models();
        let mut out = Vec::with_capacity(l * l);
        for a in 0..l {
            for j in 0..l {
                out.push(self.eval(q, a, j, None));
            }
        }
        out
    }

    /// Redraws `(M_{k-1}, M_k)` from its conditional given the coordinates.
    pub fn gibbs_models<R: Rng + ?Sized>(&mut self, q: &[f64], rng: &mut R) -> Result<()> {
        let l = self.n_models();
        if l == 1 {
            return Ok(());
        }
        let mut w = self.pair_log_weights(q);
        if !crate::linalg::normalize_log_weights(&mut w) {
            return Err(Error::Sampler {
                step: 0,
                reason: "every model pair has zero conditional probability".into(),
            });
        }
        let idx = sample_categorical(rng, &w);
        self.prev_model = ModelId::from_index(idx / l);
        self.model = ModelId::from_index(idx % l);
        Ok(())
    }

    /// Redraws labels from their categorical conditionals and then the
    /// weights from `Dir(1/C + n)`.
    pub fn gibbs_clusters<R: Rng + ?Sized>(&mut self, q: &[f64], rng: &mut R) {
        if !self.learn_measurement || self.n_clusters == 1 {
            return;
        }
        let c_count = self.n_clusters;
        let d = self.ny;
        let (a, j) = (self.prev_model.index(), self.model.index());
        self.eval(q, a, j, None);
        let pred = self.s.pred.clone();
        let comps = self.components(q, j);
        let mut logits = vec![0.0; c_count];
        let mut r = vec![0.0; d];
        let n = self.assignments.len();
        let mut counts = vec![0.0; c_count];
        for m in 0..n {
            let y = &self.ys[m * d..(m + 1) * d];
            for (c, (mu, l)) in comps.iter().enumerate() {
                for i in 0..d {
                    r[i] = y[i] - pred[i] - mu[i];
                }
                tri::solve_lower(l, d, &mut r);
                let logdet: f64 = (0..d).map(|i| l[i * d + i].ln()).sum();
                logits[c] = self.weights[c].ln() - 0.5 * r.iter().map(|v| v * v).sum::<f64>() - logdet;
            }
            crate::linalg::normalize_log_weights(&mut logits);
            let c = sample_categorical(rng, &logits);
            self.assignments[m] = c;
            counts[c] += 1.0;
        }
        let alpha: Vec<f64> = counts.iter().map(|n| 1.0 / c_count as f64 + n).collect();
        self.weights = crate::model::sample_dirichlet(&alpha, rng);
        self.update_stats();
    }
}

impl Potential for StepTarget<'_> {
    fn dim(&self) -> usize {
        StepTarget::dim(self)
    }

    fn log_density_grad(&mut self, q: &[f64], grad: &mut [f64]) -> f64 {
        let (a, j) = (self.prev_model.index(), self.model.index());
        self.eval(q, a, j, Some(grad))
    }
}

impl Scratch {
    fn new(nx: usize, nz: usize, np: usize, ny: usize) -> Self {
        let d2 = ny * ny;
        Scratch {
            w: vec![0.0; nx + nz],
            gw: vec![0.0; nx + nz],
            tmp: vec![0.0; nx],
            x_prev: vec![0.0; nx],
            x: vec![0.0; nx],
            theta: vec![0.0; np],
            g_theta: vec![0.0; np],
            pred: vec![0.0; ny],
            g_pred: vec![0.0; ny],
            g_x: vec![0.0; nx],
            g_xprev: vec![0.0; nx],
            lr: vec![0.0; d2],
            lr_inv: vec![0.0; d2],
            l: vec![0.0; d2],
            l_inv: vec![0.0; d2],
            mu: vec![0.0; ny],
            e: vec![0.0; ny],
            v: vec![0.0; ny],
            ks: vec![0.0; d2],
            p: vec![0.0; d2],
            gl: vec![0.0; d2],
            glr: vec![0.0; d2],
        }
    }
}

/// `sum_m log N(y_m; s.pred + s.mu, L L^T)` with `L = s.l` over one component's statistics,
/// without the `2 pi` constant. Leaves `v = Sigma^{-1}(ybar - pred - mu)`
/// in `s.v` and, when `want_grad`, the lower-triangular gradient with
/// respect to `L` (excluding the mean path) in `s.gl`.
fn gaussian_stats_term(st: &ClusterStats, d: usize, s: &mut Scratch, want_grad: bool) -> f64 {
    let n = st.count;
    let (pred, mu, l) = (&s.pred, &s.mu, &s.l);
    for i in 0..d {
        s.e[i] = st.mean[i] - pred[i] - mu[i];
    }
    tri::solve_lower(l, d, &mut s.e);
    let wsq: f64 = s.e.iter().map(|v| v * v).sum();
    s.v.copy_from_slice(&s.e);
    tri::solve_lower_t(l, d, &mut s.v);
    tri::inverse(l, d, &mut s.l_inv);
    // KS = L^{-1} S, P = KS K^T.
    for i in 0..d {
        for k in 0..d {
            let mut acc = 0.0;
            for t in 0..=i {
                acc += s.l_inv[i * d + t] * st.scatter[t * d + k];
            }
            s.ks[i * d + k] = acc;
        }
    }
    let mut tr = 0.0;
    for i in 0..d {
        for k in 0..d {
            let mut acc = 0.0;
            for t in 0..=k {
                acc += s.ks[i * d + t] * s.l_inv[k * d + t];
            }
            s.p[i * d + k] = acc;
        }
        tr += s.p[i * d + i];
    }
    let logdet: f64 = (0..d).map(|i| l[i * d + i].ln()).sum();
    if want_grad {
        // tril(K^T P + n v w^T) - n diag(1 / L_ii).
        for i in 0..d {
            for k in 0..d {
                let mut val = 0.0;
                if k <= i {
                    for t in i..d {
                        val += s.l_inv[t * d + i] * s.p[t * d + k];
                    }
                    val += n * s.v[i] * s.e[k];
                    if i == k {
                        val -= n / l[i * d + i];
                    }
                }
                s.gl[i * d + k] = val;
            }
        }
    }
    -0.5 * tr - 0.5 * n * wsq - n * logdet
}

/// Lower-triangular matrix with diagonal `exp(s)` and strict lower part
/// `off` in row order.
fn fill_lower(s: &[f64], off: &[f64], d: usize, out: &mut [f64]) {
    let mut o = 0;
    for i in 0..d {
        for k in 0..d {
            out[i * d + k] = if k == i {
                s[i].exp()
            } else if k < i {
                let v = off[o];
                o += 1;
                v
            } else {
                0.0
            };
        }
    }
}

fn identity_rows(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// Cholesky factor with a small diagonal jitter for nearly singular
/// covariances. A zero matrix gives a zero factor.
fn robust_factor(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if let Ok(f) = noise_factor(m, what) {
        return Ok(f);
    }
    let scale = (m.trace() / m.nrows().max(1) as f64).abs().max(1e-300);
    let mut jitter = 1e-12 * scale;
    for _ in 0..12 {
        let mut mj = m.clone();
        for i in 0..m.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Ok(f) = cholesky(&mj, what) {
            return Ok(f);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(what))
}
