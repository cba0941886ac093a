use nalgebra::{RealField, Scalar};
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Real scalar the floating-point routines are generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion of an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl<T: RealField + Copy + FromPrimitive + ToPrimitive> Real for T {}

/// Entry type of a walk kernel: any exact or floating field with a `1/2`.
pub trait KernelScalar: Scalar + Num + Clone {
    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }
}

impl<T: Scalar + Num + Clone> KernelScalar for T {}
