//! Scalar abstraction: the numeric element type of all tensors.
//!
//! Everything in this crate is generic over [`Scalar`], so the same code
//! runs in 64-bit (the default, and the precision all tolerances are
//! stated for) or 32-bit. Checkpoint and artifact files always store
//! 64-bit values regardless of the in-memory type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps};

/// Floating-point element type for tensors and model weights.
pub trait Scalar:
    Float + NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Conversion from f64 (exact for f64, rounded for f32).
    fn from_f64(v: f64) -> Self;
    /// Widening conversion to f64 (exact for both f32 and f64).
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
