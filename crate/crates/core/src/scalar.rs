//! Floating-point abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Scalar type the trainers, models, and oracle kernels are generic over:
/// f32 or f64.
///
/// Protocol-level quantities (scores, probabilities fed to the exact
/// oracle, error bars) are always f64; this trait covers the model-side
/// arithmetic. Hyperparameters and literals enter through
/// [`Scalar::from_f64_lossy`] so that f32 and f64 instantiations consume
/// identical RNG streams.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Narrowing conversion from f64; finite inputs always convert.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any scalar")
    }

    /// Widening conversion to f64 for protocol-level use.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("every scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
