//! Small dense linear-algebra helpers.
//!
//! General code works on `nalgebra` matrices. The sampler hot path uses the
//! row-major lower-triangular slice routines in [`tri`], which never
//! allocate.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::dim(what, m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(what));
    }
    let sym = (m + m.transpose()) * 0.5;
    let l = Cholesky::new(sym)
        .map(|c| c.unpack())
        .ok_or(Error::NotPositiveDefinite(what))?;
    if (0..l.nrows()).any(|i| !(l[(i, i)] > 0.0)) {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(l)
}

/// `log |L L^T|` from the lower factor.
pub fn chol_log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Gaussian log-density given the lower Cholesky factor of the covariance.
pub fn mvn_log_pdf_chol(x: &[f64], mean: &[f64], l: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let r = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let w = l
        .solve_lower_triangular(&r)
        .expect("Cholesky factor has a positive diagonal");
    -0.5 * w.norm_squared() - 0.5 * chol_log_det(l) - 0.5 * d as f64 * LN_2PI
}

pub fn mvn_log_pdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() || cov.nrows() != x.len() {
        return Err(Error::dim("mvn_log_pdf", cov.nrows(), x.len()));
    }
    let l = cholesky(cov, "covariance")?;
    Ok(mvn_log_pdf_chol(x, mean, &l))
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draw `mean + L z` with `z ~ N(0, I)`.
pub fn sample_mvn<R: Rng + ?Sized>(rng: &mut R, mean: &[f64], l: &DMatrix<f64>) -> Vec<f64> {
    let z = standard_normal_vec(rng, mean.len());
    let lz = l * z;
    mean.iter().zip(lz.iter()).map(|(m, v)| m + v).collect()
}

/// `log Gamma_d(a)`, the multivariate gamma function.
pub fn ln_multigamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * PI.ln()
        + (1..=d)
            .map(|i| libm::lgamma(a + (1.0 - i as f64) / 2.0))
            .sum::<f64>()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights in place into probabilities. Returns `false` when
/// every weight is `-inf` or any is NaN.
pub fn normalize_log_weights(w: &mut [f64]) -> bool {
    if w.iter().any(|v| v.is_nan()) {
        return false;
    }
    let lse = log_sum_exp(w);
    if !lse.is_finite() {
        return false;
    }
    for v in w.iter_mut() {
        *v = (*v - lse).exp();
    }
    true
}

/// Inverse-CDF categorical draw from normalized probabilities.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off can leave `acc` a hair below 1; fall back to the last
    // index with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Row-major copy of a matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Allocation-free routines on row-major `d x d` lower-triangular matrices.
/// Entries above the diagonal are ignored.
pub mod tri {
    /// Solves `L x = b` in place.
    #[inline]
    pub fn solve_lower(l: &[f64], d: usize, b: &mut [f64]) {
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * d + k] * b[k];
            }
            b[i] = s / l[i * d + i];
        }
    }

    /// Solves `L^T x = b` in place.
    #[inline]
    pub fn solve_lower_t(l: &[f64], d: usize, b: &mut [f64]) {
        for i in (0..d).rev() {
            let mut s = b[i];
            for k in i + 1..d {
                s -= l[k * d + i] * b[k];
            }
            b[i] = s / l[i * d + i];
        }
    }

    /// `out = L x`.
    #[inline]
    pub fn mul(l: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..=i {
                s += l[i * d + k] * x[k];
            }
            out[i] = s;
        }
    }

    /// `out += L^T x`.
    #[inline]
    pub fn mul_t_add(l: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
        for i in 0..d {
            for k in 0..=i {
                out[k] += l[i * d + k] * x[i];
            }
        }
    }

    /// `out = A B` for lower-triangular `A` and `B`.
    #[inline]
    pub fn matmul(a: &[f64], b: &[f64], d: usize, out: &mut [f64]) {
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                if j <= i {
                    for k in j..=i {
                        s += a[i * d + k] * b[k * d + j];
                    }
                }
                out[i * d + j] = s;
            }
        }
    }

    /// `out = tril(A^T G)` for lower-triangular `A` and a full `G`. This is
    /// the pull-back of a gradient through `L = A Lref`.
    #[inline]
    pub fn pullback_left(a: &[f64], g: &[f64], d: usize, out: &mut [f64]) {
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                if j <= i {
                    for k in i..d {
                        s += a[k * d + i] * g[k * d + j];
                    }
                }
                out[i * d + j] = s;
            }
        }
    }

    /// Inverse of a lower-triangular matrix (also lower-triangular).
    #[inline]
    pub fn inverse(l: &[f64], d: usize, out: &mut [f64]) {
        for v in out[..d * d].iter_mut() {
            *v = 0.0;
        }
        for j in 0..d {
            out[j * d + j] = 1.0 / l[j * d + j];
            for i in j + 1..d {
                let mut s = 0.0;
                for k in j..i {
                    s -= l[i * d + k] * out[k * d + j];
                }
                out[i * d + j] = s / l[i * d + i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use nalgebra::dmatrix;

    #[test]
    fn mvn_log_pdf_standard_normal_at_one() {
        let l = DMatrix::identity(1, 1);
        let v = mvn_log_pdf_chol(&[1.0], &[0.0], &l);
        assert!((v - (-0.5 - 0.5 * (2.0 * PI).ln())).abs() < 1e-14);
        assert!((v + 1.418_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(cholesky(&m, "m").is_err());
    }

    #[test]
    fn multigamma_reduces_to_lgamma_in_one_dimension() {
        assert!((ln_multigamma(1, 3.5) - libm::lgamma(3.5)).abs() < 1e-14);
    }

    #[test]
    fn tri_routines_agree_with_nalgebra() {
        let a = dmatrix![2.0, 0.0, 0.0; 0.3, 1.5, 0.0; -0.4, 0.2, 0.7];
        let b = dmatrix![1.1, 0.0, 0.0; -0.5, 0.9, 0.0; 0.25, 0.6, 1.3];
        let (ar, br) = (to_row_major(&a), to_row_major(&b));
        let mut out = [0.0; 9];
        tri::matmul(&ar, &br, 3, &mut out);
        assert!((from_row_major(3, 3, &out) - &a * &b).amax() < 1e-14);

        let g = dmatrix![0.3, -1.0, 2.0; 0.1, 0.2, 0.3; -0.7, 0.5, 0.9];
        tri::pullback_left(&ar, &to_row_major(&g), 3, &mut out);
        let expect = (a.transpose() * &g).lower_triangle();
        assert!((from_row_major(3, 3, &out) - expect).amax() < 1e-14);

        tri::inverse(&ar, 3, &mut out);
        let inv = from_row_major(3, 3, &out);
        assert!((&a * inv - DMatrix::identity(3, 3)).amax() < 1e-14);

        let mut x = [1.0, 2.0, 3.0];
        tri::solve_lower(&ar, 3, &mut x);
        let mut back = [0.0; 3];
        tri::mul(&ar, 3, &x, &mut back);
        assert!((back[2] - 3.0).abs() < 1e-14);
        let mut y = [1.0, -2.0, 0.5];
        tri::solve_lower_t(&ar, 3, &mut y);
        let mut z = [0.0; 3];
        tri::mul_t_add(&ar, 3, &y, &mut z);
        assert!((z[1] + 2.0).abs() < 1e-14 && (z[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn log_weight_normalization() {
        let mut w = [0.0, (2.0f64).ln(), f64::NEG_INFINITY];
        assert!(normalize_log_weights(&mut w));
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && w[2] == 0.0);
        let mut bad = [f64::NEG_INFINITY; 2];
        assert!(!normalize_log_weights(&mut bad));
    }
}
