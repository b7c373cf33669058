//! Kalman-filter baselines: a static bank of single-model filters whose
//! tracks are mixed by their cumulative likelihoods. For the nonlinear
//! turn scenario each filter is an extended Kalman filter.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, cholesky, normalize_log_weights, symmetrize, LN_2PI};
use crate::model::{ModelBank, ModelId, ObsVec, StateVec};
#[allow(unused_imports)]
use num_traits::Float;

/// Jitter added to an innovation covariance that fails to factor.
pub const INNOVATION_JITTER: f64 = 1e-9;

/// Linear-Gaussian state-space model
/// `x_k = A x_{k-1} + N(0, Q)`, `y = C x_k + N(0, R)`, `x_0 ~ N(x0, P0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x0: Vec<f64>,
    pub p0: DMatrix<f64>,
}

impl KalmanModel {
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        x0: Vec<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || c.ncols() != n || q.shape() != (n, n) || p0.shape() != (n, n) {
            return Err(Error::dim("kalman model state", n, c.ncols()));
        }
        if r.shape() != (c.nrows(), c.nrows()) {
            return Err(Error::dim("kalman model observation", c.nrows(), r.nrows()));
        }
        if x0.len() != n {
            return Err(Error::dim("kalman initial mean", n, x0.len()));
        }
        check_psd(&q, "process noise")?;
        check_psd(&r, "measurement noise")?;
        cholesky(&p0, "initial covariance")?;
        Ok(KalmanModel { a, c, q, r, x0, p0 })
    }

    /// Linear model of bank member `j` staying in `j` with nominal
    /// transition parameters. The bank's maps are linearized at `x0`.
    pub fn from_bank(bank: &ModelBank, j: ModelId, x0: Vec<f64>, p0: DMatrix<f64>) -> Result<Self> {
        let theta = vec![0.0; bank.param_dim()];
        KalmanModel::new(
            bank.motion().jacobian(j, j, &x0),
            bank.observation().jacobian(&x0),
            bank.noise().covariance(j, j, &theta),
            bank.measurement_kernel(j).noise_cov().clone(),
            x0,
            p0,
        )
    }
}

/// Zero is allowed (exact dynamics); anything else must factor.
fn check_psd(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| *v == 0.0) {
        return Ok(());
    }
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += INNOVATION_JITTER;
    }
    cholesky(&jittered, what).map(|_| ())
}

/// Filtered means and covariances, one per step, with the predictive
/// log-likelihood of each step's measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub means: Vec<StateVec>,
    pub covs: Vec<DMatrix<f64>>,
    pub loglik: Vec<f64>,
}

impl KalmanTrack {
    fn with_capacity(k: usize) -> Self {
        KalmanTrack {
            means: Vec::with_capacity(k),
            covs: Vec::with_capacity(k),
            loglik: Vec::with_capacity(k),
        }
    }
}

/// Measurement update with `y ~ N(pred + H (x - x_pred), R)`. Returns the
/// predictive log density of `y`.
fn update(
    x: &mut DVector<f64>,
    p: &mut DMatrix<f64>,
    y: &[f64],
    pred: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<f64> {
    let mut s = h * &*p * h.transpose() + r;
    symmetrize(&mut s);
    let ls = match cholesky(&s, "innovation covariance") {
        Ok(l) => l,
        Err(_) => {
            for i in 0..s.nrows() {
                s[(i, i)] += INNOVATION_JITTER;
            }
            cholesky(&s, "innovation covariance")
                .map_err(|_| Error::Numerical("innovation covariance is not positive definite".into()))?
        }
    };
    let innov = DVector::from_column_slice(y) - pred;
    let w = ls.solve_lower_triangular(&innov).expect("positive diagonal");
    let loglik = -0.5 * w.norm_squared() - 0.5 * chol_log_det(&ls) - 0.5 * y.len() as f64 * LN_2PI;
    // K = P H^T S^{-1}
    let pht = &*p * h.transpose();
    let tmp = ls
        .solve_lower_triangular(&pht.transpose())
        .expect("positive diagonal");
    let gain = ls
        .transpose()
        .solve_upper_triangular(&tmp)
        .expect("positive diagonal")
        .transpose();
    *x += &gain * innov;
    // Joseph form keeps P symmetric positive semidefinite.
    let n = p.nrows();
    let ikh = DMatrix::identity(n, n) - &gain * h;
    *p = &ikh * &*p * ikh.transpose() + &gain * r * gain.transpose();
    symmetrize(p);
    Ok(loglik)
}

/// Standard Kalman filter. Every measurement of a step is applied in turn,
/// which equals one update with the stacked measurement vector.
pub fn kf_filter(model: &KalmanModel, ys: &[Vec<ObsVec>]) -> Result<KalmanTrack> {
    let mut x = DVector::from_column_slice(&model.x0);
    let mut p = model.p0.clone();
    let mut track = KalmanTrack::with_capacity(ys.len());
    for yk in ys {
        x = &model.a * x;
        p = &model.a * p * model.a.transpose() + &model.q;
        symmetrize(&mut p);
        let mut ll = 0.0;
        for y in yk {
            if y.dim() != model.c.nrows() {
                return Err(Error::dim("measurement", model.c.nrows(), y.dim()));
            }
            let pred = &model.c * &x;
            ll += update(&mut x, &mut p, y, &pred, &model.c, &model.r)?;
        }
        track.means.push(StateVec::from(x.clone()));
        track.covs.push(p.clone());
        track.loglik.push(ll);
    }
    Ok(track)
}

/// Extended Kalman filter for bank member `j` staying in `j` with
/// nominal transition parameters.
pub fn ekf_filter(
    bank: &ModelBank,
    j: ModelId,
    x0: &[f64],
    p0: &DMatrix<f64>,
    ys: &[Vec<ObsVec>],
) -> Result<KalmanTrack> {
    let nx = bank.state_dim();
    if x0.len() != nx || p0.shape() != (nx, nx) {
        return Err(Error::dim("ekf initial state", nx, x0.len()));
    }
    let motion = bank.motion();
    let obs = bank.observation();
    let q = bank.noise().covariance(j, j, &vec![0.0; bank.param_dim()]);
    let r = bank.measurement_kernel(j).noise_cov().clone();
    let mut x = DVector::from_column_slice(x0);
    let mut p = p0.clone();
    let mut buf = vec![0.0; nx];
    let mut pred = vec![0.0; bank.obs_dim()];
    let mut track = KalmanTrack::with_capacity(ys.len());
    for yk in ys {
        let f = motion.jacobian(j, j, x.as_slice());
        motion.mean(j, j, x.as_slice(), &mut buf);
        x.copy_from_slice(&buf);
        p = &f * p * f.transpose() + &q;
        symmetrize(&mut p);
        let mut ll = 0.0;
        for y in yk {
            obs.predict(x.as_slice(), &mut pred);
            let h = obs.jacobian(x.as_slice());
            let pv = DVector::from_column_slice(&pred);
            ll += update(&mut x, &mut p, y, &pv, &h, &r)?;
        }
        track.means.push(StateVec::from(x.clone()));
        track.covs.push(p.clone());
        track.loglik.push(ll);
    }
    Ok(track)
}

/// Per-step mixture of a bank of single-model tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct BankTrack {
    pub estimates: Vec<StateVec>,
    /// Model weights per step, proportional to `exp` of the cumulative
    /// log-likelihood.
    pub weights: Vec<Vec<f64>>,
    pub tracks: Vec<KalmanTrack>,
}

impl BankTrack {
    /// Highest-weight model per step (ties go to the smaller index).
    pub fn model_map(&self) -> Vec<ModelId> {
        self.weights
            .iter()
            .map(|w| {
                let best = (0..w.len()).fold(0, |b, j| if w[j] > w[b] { j } else { b });
                ModelId::from_index(best)
            })
            .collect()
    }
}

/// Mixes already computed tracks by their cumulative likelihoods.
pub fn mix_tracks(tracks: Vec<KalmanTrack>) -> Result<BankTrack> {
    if tracks.is_empty() {
        return Err(Error::Config("kalman bank is empty".into()));
    }
    let k = tracks[0].means.len();
    let nx = tracks[0].means.first().map_or(0, |m| m.dim());
    let mut cum = vec![0.0; tracks.len()];
    let mut estimates = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for step in 0..k {
        for (c, t) in cum.iter_mut().zip(&tracks) {
            *c += t.loglik[step];
        }
        let mut w = cum.clone();
        if !normalize_log_weights(&mut w) {
            return Err(Error::Numerical("every bank member has zero likelihood".into()));
        }
        let mut mean = vec![0.0; nx];
        for (wi, t) in w.iter().zip(&tracks) {
            for (m, v) in mean.iter_mut().zip(t.means[step].iter()) {
                *m += wi * v;
            }
        }
        estimates.push(StateVec(mean));
        weights.push(w);
    }
    Ok(BankTrack {
        estimates,
        weights,
        tracks,
    })
}

/// Runs [`kf_filter`] for every model and mixes the tracks.
pub fn kf_bank_track(models: &[KalmanModel], ys: &[Vec<ObsVec>]) -> Result<BankTrack> {
    let tracks = models
        .iter()
        .map(|m| kf_filter(m, ys))
        .collect::<Result<Vec<_>>>()?;
    mix_tracks(tracks)
}

/// EKF counterpart of [`kf_bank_track`] over every member of `bank`.
pub fn ekf_bank_track(
    bank: &ModelBank,
    x0: &[f64],
    p0: &DMatrix<f64>,
    ys: &[Vec<ObsVec>],
) -> Result<BankTrack> {
    let tracks = bank
        .models()
        .map(|j| ekf_filter(bank, j, x0, p0, ys))
        .collect::<Result<Vec<_>>>()?;
    mix_tracks(tracks)
}
