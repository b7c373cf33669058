use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, cholesky, ln_multigamma, mvn_log_pdf_chol, LN_2PI};
#[allow(unused_imports)]
use num_traits::Float;

/// Degenerate inverse-Wishart draws are retried this many times.
pub const NIW_MAX_RETRIES: usize = 16;

/// Normal-inverse-Wishart prior `NIW(m, lambda, Psi, nu)`:
/// `Sigma ~ IW(Psi, nu)`, `mu | Sigma ~ N(m, Sigma / lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwParams {
    mean: Vec<f64>,
    scale: f64,
    scale_matrix: DMatrix<f64>,
    dof: f64,
    psi_chol: DMatrix<f64>,
}

impl NiwParams {
    pub fn new(mean: Vec<f64>, scale: f64, scale_matrix: DMatrix<f64>, dof: f64) -> Result<Self> {
        let d = mean.len();
        if scale_matrix.nrows() != d || scale_matrix.ncols() != d {
            return Err(Error::dim("NIW scale matrix", d, scale_matrix.nrows()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config("NIW scale lambda must be > 0".into()));
        }
        if !(dof.is_finite() && dof > d as f64 - 1.0) {
            return Err(Error::Config("NIW degrees of freedom must exceed dim - 1".into()));
        }
        let psi_chol = cholesky(&scale_matrix, "NIW scale matrix")?;
        Ok(NiwParams {
            mean,
            scale,
            scale_matrix,
            dof,
            psi_chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scale_matrix(&self) -> &DMatrix<f64> {
        &self.scale_matrix
    }

    pub fn scale_matrix_chol(&self) -> &DMatrix<f64> {
        &self.psi_chol
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// Mode of the joint density: `(m, Psi / (nu + d + 2))`.
    pub fn mode(&self) -> GmmComponent {
        let d = self.dim() as f64;
        GmmComponent {
            mean: self.mean.clone(),
            cov: &self.scale_matrix / (self.dof + d + 2.0),
        }
    }
}

/// Mean and covariance of one mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

/// Draws `(mu, Sigma)` from the prior.
pub fn niw_sample<R: Rng + ?Sized>(prior: &NiwParams, rng: &mut R) -> Result<GmmComponent> {
    let d = prior.dim();
    // Bartlett: Sigma^{-1} = (Lw A)(Lw A)^T with Lw = chol(Psi^{-1}).
    let psi_inv = prior
        .scale_matrix
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite("NIW scale matrix"))?;
    let lw = cholesky(&psi_inv, "inverse NIW scale matrix")?;
    for _ in 0..NIW_MAX_RETRIES {
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            let chi = ChiSquared::new(prior.dof - i as f64)
                .map_err(|_| Error::Numerical("invalid chi-square degrees of freedom".into()))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let t = &lw * a;
        let Some(t_inv) = t.solve_lower_triangular(&DMatrix::identity(d, d)) else {
            continue;
        };
        let mut cov = t_inv.transpose() * &t_inv;
        crate::linalg::symmetrize(&mut cov);
        let Ok(l) = cholesky(&cov, "sampled covariance") else {
            continue;
        };
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let shift = (l * z) / prior.scale.sqrt();
        let mean: Vec<f64> = prior.mean.iter().zip(shift.iter()).map(|(m, s)| m + s).collect();
        if mean.iter().all(|v| v.is_finite()) {
            return Ok(GmmComponent { mean, cov });
        }
    }
    Err(Error::Numerical(alloc::format!(
        "NIW draw degenerate after {NIW_MAX_RETRIES} retries"
    )))
}

/// `log IW(Sigma; Psi, nu)` given the Cholesky factor of `Sigma`.
pub(crate) fn inverse_wishart_log_density(sigma_chol: &DMatrix<f64>, prior: &NiwParams) -> f64 {
    let d = prior.dim();
    let nu = prior.dof;
    // tr(Psi Sigma^{-1}) = ||L_Sigma^{-1} L_Psi||_F^2
    let k = sigma_chol
        .solve_lower_triangular(&prior.psi_chol)
        .expect("positive diagonal");
    0.5 * nu * chol_log_det(&prior.psi_chol)
        - 0.5 * nu * d as f64 * core::f64::consts::LN_2
        - ln_multigamma(d, 0.5 * nu)
        - 0.5 * (nu + d as f64 + 1.0) * chol_log_det(sigma_chol)
        - 0.5 * k.norm_squared()
}

/// Exact `log NIW(mu, Sigma; m, lambda, Psi, nu)`.
pub fn niw_log_density(phi: &GmmComponent, prior: &NiwParams) -> Result<f64> {
    let d = prior.dim();
    if phi.mean.len() != d || phi.cov.nrows() != d {
        return Err(Error::dim("NIW argument", d, phi.mean.len()));
    }
    let l = cholesky(&phi.cov, "component covariance")?;
    let l_mean = &l / prior.scale.sqrt();
    let normal = mvn_log_pdf_chol(&phi.mean, &prior.mean, &l_mean);
    Ok(normal + inverse_wishart_log_density(&l, prior))
}

/// Constant part of the NIW density that does not depend on `(mu, Sigma)`.
#[allow(dead_code)]
pub(crate) fn niw_log_normalizer(prior: &NiwParams) -> f64 {
    let d = prior.dim() as f64;
    let nu = prior.dof;
    -0.5 * d * LN_2PI + 0.5 * d * prior.scale.ln() + 0.5 * nu * chol_log_det(&prior.psi_chol)
        - 0.5 * nu * d * core::f64::consts::LN_2
        - ln_multigamma(prior.dim(), 0.5 * nu)
}
