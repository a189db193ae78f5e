//! Floating-point scalar abstraction.

use num_traits::Float;

/// Scalar type the numeric kernels are generic over: `f32` or `f64`.
///
/// `f32` is the working precision (model files store parameters as 32-bit
/// floats); `f64` exists so gradient checks can run at tight tolerances.
pub trait Scalar:
    Float
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion for logging and metrics.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Conversion from an `f64` constant, panicking on overflow.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from(v).expect("f64 constant representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
