//! Multiple-model Bayesian object tracking.
//!
//! A moving object switches among a finite bank of motion models. At every
//! step the tracker infers the object state, the active model, the
//! transition parameters and a Gaussian-mixture measurement hierarchy with
//! an HMC-within-Gibbs sampler. The crate also carries the two reference
//! scenarios, a Kalman-bank baseline and the evaluation metrics.
//!
//! The crate is `no_std` and needs only `alloc`. File formats and the
//! experiment runner live in the `bkt` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod error;
pub mod eval;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{ModelBank, ModelId, ObsVec, ParamVec, StateVec};
