//! MIS protocols: the beep-model algorithm and its LOCAL-model ancestor.

pub mod beep_mis;
pub mod local_mis;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelError;
use crate::trace::Class;

pub use beep_mis::{BeepMisNode, ParamsError, ProtocolParams};
pub use local_mis::LocalNodeState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Desire level `2^-k` with `k >= 1`, stored as its exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesireLevel(u32);

impl DesireLevel {
    /// The starting level, 1/2.
    pub const INITIAL: Self = Self(1);

    pub fn from_exponent(k: u32) -> Option<Self> {
        (k >= 1).then_some(Self(k))
    }

    pub fn exponent(self) -> u32 {
        self.0
    }

    pub fn halve(self) -> Self {
        Self(self.0.saturating_add(1))
    }

    /// `min(2p, 1/2)`.
    pub fn double_capped(self) -> Self {
        Self((self.0 - 1).max(1))
    }

    pub fn value(self) -> f64 {
        0.5f64.powi(self.0.min(i32::MAX as u32) as i32)
    }

    pub fn to_ratio(self) -> BigRational {
        BigRational::new(BigInt::one(), BigInt::one() << self.0)
    }
}

/// HIGH halves the desire level, LOW doubles it up to 1/2.
pub fn update_desire(p: DesireLevel, class: Class) -> DesireLevel {
    match class {
        Class::High => p.halve(),
        Class::Low => p.double_capped(),
    }
}

/// Exact sum of desire levels.
pub fn sum_desire<I>(levels: I) -> BigRational
where
    I: IntoIterator<Item = DesireLevel>,
{
    let exps: Vec<u32> = levels.into_iter().map(DesireLevel::exponent).collect();
    let Some(&top) = exps.iter().max() else {
        return BigRational::zero();
    };
    let numer: BigUint = exps.iter().map(|&k| BigUint::one() << (top - k)).sum();
    BigRational::new(BigInt::from(numer), BigInt::one() << top)
}
