use alloc::vec::Vec;
use core::fmt;
use core::ops::{Deref, DerefMut};

use nalgebra::DVector;

/// One-based label of a model in the bank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelId(u32);

impl ModelId {
    /// From a one-based label. Returns `None` for zero.
    pub fn new(label: usize) -> Option<Self> {
        (label >= 1).then(|| ModelId(label as u32))
    }

    /// From a zero-based index.
    pub const fn from_index(index: usize) -> Self {
        ModelId(index as u32 + 1)
    }

    pub const fn label(self) -> usize {
        self.0 as usize
    }

    pub const fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Default)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                $name(values)
            }

            pub fn zeros(dim: usize) -> Self {
                $name(alloc::vec![0.0; dim])
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn to_dvector(&self) -> DVector<f64> {
                DVector::from_column_slice(&self.0)
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                $name(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                $name(v.to_vec())
            }
        }

        impl From<DVector<f64>> for $name {
            fn from(v: DVector<f64>) -> Self {
                $name(v.as_slice().to_vec())
            }
        }
    };
}

real_vector!(
    /// Object state: positions, velocities and, for the turn model, the
    /// turn rate.
    StateVec
);
real_vector!(
    /// One observation.
    ObsVec
);
real_vector!(
    /// Model-specific transition parameters (log-variance deviations from
    /// the model's nominal process noise).
    ParamVec
);
