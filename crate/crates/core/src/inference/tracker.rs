//! The sequential tracker: one HMC-within-Gibbs chain per time step, each
//! seeded by a Gaussian summary of the previous step's draws.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;

use super::bic::select_cluster_count_detailed;
use super::config::SamplerConfig;
use super::ess::effective_sample_size;
use super::hmc::{Adaptation, Hmc, HmcState};
use super::step::{StepPrior, StepSamples, StepTarget};
use crate::error::{Error, Result};
use crate::model::{ModelBank, ModelId, ObsVec, StateVec};
use crate::rng::{child_rng, stream};
#[allow(unused_imports)]
use num_traits::Float;

/// Acceptance rate below which a step is flagged.
pub const LOW_ACCEPTANCE: f64 = 0.05;

/// Per-step estimates and chain diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    /// `E[x_k | Y_{1..k}, M_k = M_hat_k]`.
    pub state_mean: Vec<StateVec>,
    /// Posterior standard deviation of `x_k` given `M_k = M_hat_k`.
    pub state_sd: Vec<Vec<f64>>,
    /// Mean of the transition parameters given `M_k = M_hat_k`.
    pub param_mean: Vec<Vec<f64>>,
    pub model_map: Vec<ModelId>,
    pub model_marginals: Vec<Vec<f64>>,
    /// Effective sample size of each state coordinate, per step.
    pub ess: Vec<Vec<f64>>,
    pub acceptance_rate: Vec<f64>,
    /// Step size in use after burn-in.
    pub step_sizes: Vec<f64>,
    pub cluster_counts: Vec<usize>,
    pub warnings: Vec<String>,
    pub samples: Option<Vec<StepSamples>>,
}

impl PosteriorSummary {
    pub fn horizon(&self) -> usize {
        self.state_mean.len()
    }

    /// Mean acceptance rate over all steps.
    pub fn overall_acceptance(&self) -> f64 {
        if self.acceptance_rate.is_empty() {
            return 0.0;
        }
        self.acceptance_rate.iter().sum::<f64>() / self.acceptance_rate.len() as f64
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Result of one step's chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub samples: StepSamples,
    pub acceptance_rate: f64,
    pub step_size: f64,
    pub n_clusters: usize,
    /// Whether every EM fit behind the cluster-count choice converged.
    pub selection_converged: bool,
}

/// Runs the chain of one step for measurement set `ys` given the summary
/// of the previous step.
pub fn run_step<R: Rng + ?Sized>(
    bank: &ModelBank,
    prior: &StepPrior,
    ys: &[ObsVec],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let (n_clusters, selection_converged) = if cfg.learn_measurement && !ys.is_empty() {
        let rows: Vec<Vec<f64>> = ys.iter().map(|y| y.0.clone()).collect();
        let sel = select_cluster_count_detailed(&rows, &cfg.cluster_candidates);
        (sel.count, sel.converged)
    } else {
        (1, true)
    };
    let mut target = StepTarget::new(
        bank,
        prior,
        ys,
        n_clusters,
        cfg.learn_transition,
        cfg.learn_measurement,
    )?;
    let dim = target.dim();
    let q0 = target.initial_point();
    target.gibbs_models(&q0, rng)?;
    let mut state = HmcState::new(&mut target, q0);
    if !state.log_density.is_finite() {
        return Err(Error::Sampler {
            step: 0,
            reason: "initial point has zero posterior density".into(),
        });
    }
    let mut hmc = Hmc::new(dim, cfg.step_size, cfg.leapfrog_steps);
    if let Some(m) = &cfg.mass {
        if m.len() != dim {
            return Err(Error::dim("mass", dim, m.len()));
        }
        hmc = hmc.with_mass(m);
    }
    let mut adapt = cfg
        .adapt
        .then(|| Adaptation::new(&hmc, cfg.burn_in, cfg.target_accept));

    let mut samples = StepSamples::new(bank.state_dim(), bank.param_dim(), cfg.retained());
    let mut accepted = 0usize;
    for it in 0..cfg.n_iterations {
        if it == cfg.burn_in {
            hmc.jitter = cfg.step_jitter;
        }
        let tr = hmc.transition(&mut target, &mut state, rng);
        if let Some(a) = adapt.as_mut() {
            a.update(&mut hmc, it, tr.accept_prob, &state.q);
        }
        target.gibbs_models(&state.q, rng)?;
        target.gibbs_clusters(&state.q, rng);
        state.refresh(&mut target);
        if it >= cfg.burn_in {
            accepted += tr.accepted as usize;
            let (prev, model) = (target.prev_model, target.model);
            let (x, theta, _) = target.natural(&state.q);
            samples.push(prev, model, x, theta);
        }
    }
    Ok(StepOutcome {
        samples,
        acceptance_rate: accepted as f64 / cfg.retained() as f64,
        step_size: hmc.step_size,
        n_clusters,
        selection_converged,
    })
}

/// Tracks the object over all measurement sets. Estimates at step `k` use
/// only `Y_{1..k}`.
pub fn run_chain(
    ys: &[Vec<ObsVec>],
    bank: &ModelBank,
    cfg: &SamplerConfig,
    initial_mean: &[f64],
    initial_cov: &DMatrix<f64>,
) -> Result<PosteriorSummary> {
    cfg.validate()?;
    if ys.is_empty() {
        return Err(Error::Config("no measurements to track".into()));
    }
    let l = bank.n_models();
    let nx = bank.state_dim();
    let mut prior = StepPrior::initial(bank, initial_mean, initial_cov)?;
    let mut out = PosteriorSummary {
        state_mean: Vec::with_capacity(ys.len()),
        state_sd: Vec::with_capacity(ys.len()),
        param_mean: Vec::with_capacity(ys.len()),
        model_map: Vec::with_capacity(ys.len()),
        model_marginals: Vec::with_capacity(ys.len()),
        ess: Vec::with_capacity(ys.len()),
        acceptance_rate: Vec::with_capacity(ys.len()),
        step_sizes: Vec::with_capacity(ys.len()),
        cluster_counts: Vec::with_capacity(ys.len()),
        warnings: Vec::new(),
        samples: cfg.retain_samples.then(Vec::new),
    };
    for (k, yk) in ys.iter().enumerate() {
        let mut rng = child_rng(cfg.seed, &[stream::TRACKER, k as u64]);
        let step = run_step(bank, &prior, yk, cfg, &mut rng).map_err(|e| match e {
            Error::Sampler { reason, .. } => Error::Sampler { step: k + 1, reason },
            other => other,
        })?;
        let s = &step.samples;
        let n = s.len();

        let mut counts = vec![0usize; l];
        for m in &s.models {
            counts[m.index()] += 1;
        }
        let best = (0..l).fold(0, |b, j| if counts[j] > counts[b] { j } else { b });
        let map = ModelId::from_index(best);
        let sel: Vec<usize> = (0..n).filter(|&i| s.models[i] == map).collect();
        let mut mean = vec![0.0; nx];
        let mut sq = vec![0.0; nx];
        let mut pmean = vec![0.0; bank.param_dim()];
        for &i in &sel {
            for (d, v) in s.state(i).iter().enumerate() {
                mean[d] += v;
            }
            for (d, v) in s.param(i).iter().enumerate() {
                pmean[d] += v;
            }
        }
        let c = sel.len() as f64;
        mean.iter_mut().for_each(|v| *v /= c);
        pmean.iter_mut().for_each(|v| *v /= c);
        for &i in &sel {
            for (d, v) in s.state(i).iter().enumerate() {
                sq[d] += (v - mean[d]) * (v - mean[d]);
            }
        }
        let sd: Vec<f64> = sq.iter().map(|v| (v / (c - 1.0).max(1.0)).sqrt()).collect();
        let ess: Vec<f64> = (0..nx)
            .map(|d| {
                let col: Vec<f64> = (0..n).map(|i| s.state(i)[d]).collect();
                effective_sample_size(&col)
            })
            .collect();

        if step.acceptance_rate < LOW_ACCEPTANCE {
            out.warnings.push(format!(
                "step {}: acceptance rate {:.3} below {LOW_ACCEPTANCE}",
                k + 1,
                step.acceptance_rate
            ));
        }
        if !step.selection_converged {
            out.warnings.push(format!(
                "step {}: EM did not converge during cluster selection",
                k + 1
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampler {
                step: k + 1,
                reason: "non-finite state estimate".into(),
            });
        }

        prior = StepPrior::from_samples(l, s);
        out.state_mean.push(StateVec(mean));
        out.state_sd.push(sd);
        out.param_mean.push(pmean);
        out.model_map.push(map);
        out.model_marginals
            .push(counts.iter().map(|&c| c as f64 / n as f64).collect());
        out.ess.push(ess);
        out.acceptance_rate.push(step.acceptance_rate);
        out.step_sizes.push(step.step_size);
        out.cluster_counts.push(step.n_clusters);
        if let Some(v) = out.samples.as_mut() {
            v.push(step.samples);
        }
    }
    Ok(out)
}
