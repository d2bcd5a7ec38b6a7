use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the linear-algebra kernels are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }

    /// Lossy widening to `f64` (used for error payloads and reports).
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
