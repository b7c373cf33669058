//! Sequential HMC-within-Gibbs tracker.

mod bic;
mod config;
mod ess;
mod hmc;
mod predictive;
mod step;
mod tracker;
mod trajectory;

pub use bic::{fit_gmm, select_cluster_count, select_cluster_count_detailed, ClusterSelection, GmmFit};
pub use config::SamplerConfig;
pub use ess::effective_sample_size;
pub use hmc::{leapfrog, Adaptation, Hmc, HmcState, Potential, Transition};
pub use predictive::{posterior_predictive, PosteriorPredictive};
pub use step::{ModelSummary, StepPrior, StepSamples, StepTarget};
pub use tracker::{run_chain, run_step, PosteriorSummary, StepOutcome, LOW_ACCEPTANCE};
pub use trajectory::{
    gibbs_cluster_update, gibbs_model_update, grad_log_posterior, hmc_update, log_posterior,
    model_conditional, model_log_conditional, ChainState, TrajectoryTarget,
};
