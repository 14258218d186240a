//! Storage scalar for embeddings.
//!
//! Embeddings may be held as `f32` (the on-disk width) or `f64`. All distance
//! and projection arithmetic is carried out in `f64` regardless of storage.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless conversion to the accumulation width.
    fn widen(self) -> f64;

    /// Round-to-nearest conversion from the accumulation width.
    fn narrow(value: f64) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn widen(self) -> f64 {
        f64::from(self)
    }

    #[inline(always)]
    fn narrow(value: f64) -> Self {
        value as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }

    #[inline(always)]
    fn narrow(value: f64) -> Self {
        value
    }
}
