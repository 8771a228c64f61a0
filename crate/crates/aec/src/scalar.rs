use std::fmt::Display;
use std::iter::Sum;

/// Floating-point scalar the whole crate is generic over.
///
/// `f32` is the runtime precision; `f64` backs the gradient-check suite and
/// the high-precision test oracles. Both run the identical code paths.
pub trait Scalar: num_traits::Float + rustfft::FftNum + Sum<Self> + Display + Default {
    /// Lossless-enough literal conversion for constants and counters.
    fn of(x: f64) -> Self {
        num_traits::FromPrimitive::from_f64(x).expect("finite literal")
    }

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
