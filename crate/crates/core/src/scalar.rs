use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the aggregation and scoring code is generic over.
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Absolute tolerance on the sum of a weight vector.
    const SIMPLEX_TOL: Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f64 {
    const SIMPLEX_TOL: f64 = 1e-12;
}

impl Scalar for f32 {
    const SIMPLEX_TOL: f32 = 1e-5;
}
