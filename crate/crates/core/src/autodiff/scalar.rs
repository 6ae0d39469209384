//! Element type abstraction: training runs in f32, correctness checks in f64.

use std::fmt::Debug;

pub trait Scalar:
    num_traits::Float + Default + Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    /// Tag used by the checkpoint container.
    const DTYPE_TAG: u8;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    const DTYPE_TAG: u8 = 0;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    const DTYPE_TAG: u8 = 1;
}
