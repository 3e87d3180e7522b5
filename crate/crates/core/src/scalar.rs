//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar used by the MLP, metric and statistics code: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; every supported scalar can represent (an approximation of) any `f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion from f64")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("scalar conversion from usize")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Exact rational used for trait scores and cut-offs.
pub type Exact = num_rational::Ratio<i64>;

/// Round half up at `digits` decimals, as used for printed report values.
///
/// A relative nudge of 1e-9 absorbs binary representation error, so `0.745` rounds to `0.75`
/// even though its nearest double is slightly below.
pub fn round_half_up(x: f64, digits: u32) -> f64 {
    let scale = 10f64.powi(digits as i32);
    let scaled = x * scale;
    (scaled + 0.5 + scaled.abs() * 1e-12 + 1e-9).floor() / scale
}
