use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::kernels::{noise_factor, MeasurementKernel};
use super::niw::{GmmComponent, NiwParams};
use super::types::{ObsVec, StateVec};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_sum_exp, mvn_log_pdf_chol, sample_categorical, sample_mvn};
#[allow(unused_imports)]
use num_traits::Float;

/// Gaussian-mixture measurement hierarchy for one time step.
///
/// Component `l` generates `y ~ N(T(x) + mean_l, cov_l)`: component means
/// are offsets from the predicted observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementHierarchy {
    pub weights: Vec<f64>,
    /// Zero-based cluster index of each measurement.
    pub assignments: Vec<usize>,
    pub components: Vec<GmmComponent>,
    pub niw_prior: NiwParams,
}

impl MeasurementHierarchy {
    /// One centered component with the kernel's noise covariance.
    pub fn from_kernel(kernel: &MeasurementKernel, niw_prior: NiwParams, n_obs: usize) -> Self {
        MeasurementHierarchy {
            weights: vec![1.0],
            assignments: vec![0; n_obs],
            components: vec![GmmComponent {
                mean: vec![0.0; kernel.obs_dim()],
                cov: kernel.noise_cov().clone(),
            }],
            niw_prior,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.components.len();
        if c == 0 || self.weights.len() != c {
            return Err(Error::dim("mixture weights", c, self.weights.len()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("mixture weights must be nonnegative".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Config(alloc::format!("mixture weights sum to {s}")));
        }
        if self.assignments.iter().any(|&a| a >= c) {
            return Err(Error::Config("cluster assignment out of range".into()));
        }
        Ok(())
    }
}

/// `log sum_l pi_l N(y; T(x) + mu_l, Sigma_l)`.
pub fn gmm_log_likelihood(
    y: &ObsVec,
    x: &StateVec,
    kernel: &MeasurementKernel,
    h: &MeasurementHierarchy,
) -> f64 {
    let pred = kernel.predict(x);
    let terms: Vec<f64> = h
        .weights
        .iter()
        .zip(&h.components)
        .map(|(w, comp)| {
            if *w == 0.0 {
                return f64::NEG_INFINITY;
            }
            let mean: Vec<f64> = pred.iter().zip(&comp.mean).map(|(a, b)| a + b).collect();
            match cholesky(&comp.cov, "component covariance") {
                Ok(l) => w.ln() + mvn_log_pdf_chol(y, &mean, &l),
                Err(_) => f64::NAN,
            }
        })
        .collect();
    log_sum_exp(&terms)
}

/// Draws `m_count` observations around `T(x)` and returns them with the
/// component that generated each.
pub fn sample_measurements_labeled<R: Rng + ?Sized>(
    x: &StateVec,
    kernel: &MeasurementKernel,
    h: &MeasurementHierarchy,
    m_count: usize,
    rng: &mut R,
) -> Result<(Vec<ObsVec>, Vec<usize>)> {
    let pred = kernel.predict(x);
    let factors = h
        .components
        .iter()
        .map(|c| noise_factor(&c.cov, "component covariance"))
        .collect::<Result<Vec<DMatrix<f64>>>>()?;
    let mut ys = Vec::with_capacity(m_count);
    let mut labels = Vec::with_capacity(m_count);
    for _ in 0..m_count {
        let l = sample_categorical(rng, &h.weights);
        let mean: Vec<f64> = pred
            .iter()
            .zip(&h.components[l].mean)
            .map(|(a, b)| a + b)
            .collect();
        ys.push(ObsVec(sample_mvn(rng, &mean, &factors[l])));
        labels.push(l);
    }
    Ok((ys, labels))
}

pub fn sample_measurements<R: Rng + ?Sized>(
    x: &StateVec,
    kernel: &MeasurementKernel,
    h: &MeasurementHierarchy,
    m_count: usize,
    rng: &mut R,
) -> Result<Vec<ObsVec>> {
    sample_measurements_labeled(x, kernel, h, m_count, rng).map(|(ys, _)| ys)
}

/// Draws from `Dir(alpha)`. Entries are floored at the smallest positive
/// normal double so the log-weights stay finite.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .map(|g| g.sample(rng))
                .unwrap_or(0.0)
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

pub fn dirichlet_log_density(w: &[f64], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    libm::lgamma(a0)
        + alpha
            .iter()
            .zip(w)
            .map(|(a, x)| (a - 1.0) * x.ln() - libm::lgamma(*a))
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LN_2PI;
    use crate::model::{LinearObservation, ModelId};
    use crate::rng::rng_from_seed;
    use alloc::sync::Arc;
    use nalgebra::{dmatrix, DMatrix};

    fn kernel(r: DMatrix<f64>) -> MeasurementKernel {
        let c = dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 1.0, 0.0, 0.0];
        MeasurementKernel::new(ModelId::from_index(0), Arc::new(LinearObservation::new(c)), r).unwrap()
    }

    fn prior() -> NiwParams {
        NiwParams::new(vec![0.0; 2], 1.0, DMatrix::identity(2, 2), 5.0).unwrap()
    }

    fn hierarchy(weights: Vec<f64>, comps: Vec<GmmComponent>) -> MeasurementHierarchy {
        MeasurementHierarchy {
            weights,
            assignments: vec![],
            components: comps,
            niw_prior: prior(),
        }
    }

    #[test]
    fn centered_component_at_the_mode() {
        let k = kernel(DMatrix::identity(2, 2));
        let h = MeasurementHierarchy::from_kernel(&k, prior(), 1);
        let x = StateVec(vec![1.0, -2.0, 0.3, 0.1]);
        let y = k.predict(&x);
        assert!((gmm_log_likelihood(&y, &x, &k, &h) + LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn identical_components_collapse() {
        let k = kernel(DMatrix::identity(2, 2));
        let comp = GmmComponent {
            mean: vec![0.2, -0.1],
            cov: dmatrix![0.7, 0.1; 0.1, 0.4],
        };
        let one = hierarchy(vec![1.0], vec![comp.clone()]);
        let two = hierarchy(vec![0.5, 0.5], vec![comp.clone(), comp]);
        let x = StateVec(vec![0.5, 0.5, 0.0, 0.0]);
        let y = ObsVec(vec![1.0, 0.0]);
        let a = gmm_log_likelihood(&y, &x, &k, &one);
        let b = gmm_log_likelihood(&y, &x, &k, &two);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn zero_noise_draws_hit_the_prediction() {
        let k = kernel(DMatrix::identity(2, 2));
        let h = hierarchy(
            vec![1.0],
            vec![GmmComponent {
                mean: vec![0.0; 2],
                cov: DMatrix::zeros(2, 2),
            }],
        );
        let x = StateVec(vec![3.0, 4.0, 1.0, 1.0]);
        let mut rng = rng_from_seed(1);
        for y in sample_measurements(&x, &k, &h, 10, &mut rng).unwrap() {
            assert_eq!(y.0, vec![3.0, 4.0]);
        }
    }

    #[test]
    fn degenerate_weights_pick_one_component() {
        let k = kernel(DMatrix::identity(2, 2));
        let c = GmmComponent {
            mean: vec![0.0; 2],
            cov: DMatrix::identity(2, 2),
        };
        let h = hierarchy(vec![1.0, 0.0], vec![c.clone(), c]);
        let mut rng = rng_from_seed(7);
        let (_, labels) =
            sample_measurements_labeled(&StateVec(vec![0.0; 4]), &k, &h, 500, &mut rng).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn sample_covariance_matches_measurement_noise() {
        let beta = 0.5;
        let k = kernel(DMatrix::identity(2, 2) * beta);
        let h = MeasurementHierarchy::from_kernel(&k, prior(), 0);
        let x = StateVec(vec![1.0, 2.0, 0.0, 0.0]);
        let mut rng = rng_from_seed(21);
        let n = 100_000;
        let ys = sample_measurements(&x, &k, &h, n, &mut rng).unwrap();
        let mut mean = [0.0; 2];
        for y in &ys {
            mean[0] += y[0] / n as f64;
            mean[1] += y[1] / n as f64;
        }
        let mut cov = DMatrix::<f64>::zeros(2, 2);
        for y in &ys {
            for i in 0..2 {
                for j in 0..2 {
                    cov[(i, j)] += (y[i] - mean[i]) * (y[j] - mean[j]) / (n - 1) as f64;
                }
            }
        }
        let target = DMatrix::identity(2, 2) * beta;
        assert!((cov - &target).norm() / target.norm() < 0.05);
    }

    #[test]
    fn dirichlet_draws_are_on_the_simplex() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let w = sample_dirichlet(&[1.0 / 3.0; 3], &mut rng);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|v| *v > 0.0));
        }
    }
}
