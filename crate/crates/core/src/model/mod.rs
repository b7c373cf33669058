//! Domain types, distribution primitives, and the transition, jump and
//! measurement kernels.

mod bank;
mod dynamics;
mod gmm;
mod jump;
mod kernels;
mod niw;
mod types;

pub use bank::{BankParts, ModelBank, ObsDomain};
pub use dynamics::{
    LinearMotion, LinearObservation, MotionModel, NoiseBlock, ObservationModel, ProcessNoise,
};
pub use gmm::{
    dirichlet_log_density, gmm_log_likelihood, sample_dirichlet, sample_measurements,
    sample_measurements_labeled, MeasurementHierarchy,
};
pub use jump::{jump_forward, jump_roundtrip_check, JumpMap, ROUNDTRIP_TOLERANCE};
pub use kernels::{
    noise_factor, propagate_state, transition_log_density, MeasurementKernel, TransitionKernel,
};
pub use niw::{niw_log_density, niw_sample, GmmComponent, NiwParams, NIW_MAX_RETRIES};
pub use types::{ModelId, ObsVec, ParamVec, StateVec};
