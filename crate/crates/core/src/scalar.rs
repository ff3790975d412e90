//! Scalar abstraction shared by every numerical module.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the crate is generic over: `f32` or `f64`.
///
/// Elementary functions come from [`RealField`]; conversions to and from `f64`
/// literals go through `num-traits`.
pub trait Real:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Serialize + DeserializeOwned
{
    /// Converts an `f64` constant into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Name recorded in serialized artifacts.
    fn type_name() -> &'static str;
}

impl Real for f32 {
    fn type_name() -> &'static str {
        "f32"
    }
}

impl Real for f64 {
    fn type_name() -> &'static str {
        "f64"
    }
}
