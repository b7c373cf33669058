//! Cluster-count selection by BIC over EM-fitted Gaussian mixtures.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{cholesky, log_sum_exp, mvn_log_pdf_chol};
#[allow(unused_imports)]
use num_traits::Float;

const MAX_EM_ITERATIONS: usize = 200;
const EM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSelection {
    pub count: usize,
    /// `(C, BIC)` for every candidate that was fitted.
    pub scores: Vec<(usize, f64)>,
    /// False when an EM fit hit the iteration cap.
    pub converged: bool,
}

/// Picks the cluster count with the smallest BIC, ties toward fewer
/// clusters.
pub fn select_cluster_count(ys: &[Vec<f64>], candidates: &[usize]) -> usize {
    select_cluster_count_detailed(ys, candidates).count
}

pub fn select_cluster_count_detailed(ys: &[Vec<f64>], candidates: &[usize]) -> ClusterSelection {
    let mut sorted: Vec<usize> = candidates.iter().copied().filter(|c| *c > 0).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let fallback = sorted.first().copied().unwrap_or(1);
    if sorted.len() <= 1 || ys.is_empty() {
        return ClusterSelection {
            count: fallback,
            scores: Vec::new(),
            converged: true,
        };
    }
    let n = ys.len();
    let d = ys[0].len();
    let mut best: Option<(usize, f64)> = None;
    let mut scores = Vec::new();
    let mut converged = true;
    for &c in &sorted {
        if n < c * (d + 1) {
            continue;
        }
        let fit = fit_gmm(ys, c);
        converged &= fit.converged;
        let p = (c - 1) + c * (d + d * (d + 1) / 2);
        let bic = -2.0 * fit.log_likelihood + p as f64 * (n as f64).ln();
        scores.push((c, bic));
        if best.is_none_or(|(_, b)| bic < b) {
            best = Some((c, bic));
        }
    }
    ClusterSelection {
        count: best.map_or(fallback, |(c, _)| c),
        scores,
        converged,
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
    pub converged: bool,
}

/// Full-covariance EM with deterministic farthest-first initialization.
pub fn fit_gmm(ys: &[Vec<f64>], c: usize) -> GmmFit {
    let n = ys.len();
    let d = ys[0].len();
    let data: Vec<DVector<f64>> = ys.iter().map(|y| DVector::from_column_slice(y)).collect();
    let mean = data.iter().fold(DVector::zeros(d), |a, y| a + y) / n as f64;
    let mut pooled = DMatrix::zeros(d, d);
    for y in &data {
        let r = y - &mean;
        pooled += &r * r.transpose();
    }
    pooled /= n as f64;
    let floor = 1e-6 * (pooled.trace() / d as f64).max(1e-12);
    let regularize = |m: &mut DMatrix<f64>| {
        for i in 0..d {
            m[(i, i)] += floor;
        }
    };

    let mut centers: Vec<usize> = Vec::with_capacity(c);
    let first = (0..n)
        .min_by(|&a, &b| {
            (&data[a] - &mean)
                .norm_squared()
                .total_cmp(&(&data[b] - &mean).norm_squared())
        })
        .expect("nonempty data");
    centers.push(first);
    while centers.len() < c {
        let next = (0..n)
            .max_by(|&a, &b| {
                let da = centers
                    .iter()
                    .map(|&k| (&data[a] - &data[k]).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                let db = centers
                    .iter()
                    .map(|&k| (&data[b] - &data[k]).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("nonempty data");
        centers.push(next);
    }
    let mut means: Vec<DVector<f64>> = centers.iter().map(|&k| data[k].clone()).collect();
    let mut covs = vec![
        {
            let mut p = pooled.clone() / (c * c) as f64;
            regularize(&mut p);
            p
        };
        c
    ];
    let mut weights = vec![1.0 / c as f64; c];
    let mut resp = vec![0.0; n * c];
    let mut terms = vec![0.0; c];
    let mut prev = f64::NEG_INFINITY;
    let mut ll = f64::NEG_INFINITY;
    let mut converged = false;
    for _ in 0..MAX_EM_ITERATIONS {
        let chols: Vec<DMatrix<f64>> = covs
            .iter()
            .map(|s| cholesky(s, "EM covariance").unwrap_or_else(|_| DMatrix::identity(d, d)))
            .collect();
        ll = 0.0;
        for (i, y) in data.iter().enumerate() {
            for l in 0..c {
                terms[l] = weights[l].ln() + mvn_log_pdf_chol(y.as_slice(), means[l].as_slice(), &chols[l]);
            }
            let z = log_sum_exp(&terms);
            ll += z;
            for l in 0..c {
                resp[i * c + l] = (terms[l] - z).exp();
            }
        }
        if (ll - prev).abs() <= EM_TOLERANCE * ll.abs().max(1.0) {
            converged = true;
            break;
        }
        prev = ll;
        for l in 0..c {
            let nl: f64 = (0..n).map(|i| resp[i * c + l]).sum::<f64>().max(1e-300);
            weights[l] = nl / n as f64;
            let mut m = DVector::zeros(d);
            for (i, y) in data.iter().enumerate() {
                m += y * resp[i * c + l];
            }
            m /= nl;
            let mut s = DMatrix::zeros(d, d);
            for (i, y) in data.iter().enumerate() {
                let r = y - &m;
                s += (&r * r.transpose()) * resp[i * c + l];
            }
            s /= nl;
            regularize(&mut s);
            means[l] = m;
            covs[l] = s;
        }
    }
    GmmFit {
        weights,
        means,
        covs,
        log_likelihood: ll,
        converged,
    }
}
