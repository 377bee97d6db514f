//! Scalar abstraction shared by the pose algebra, reward formulas and
//! kinematics helpers.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Lossless for literals used in formulas; panics never happen for f32/f64.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle to `(-pi, pi]`. `-pi` itself maps to `+pi`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::TAU();
    let mut w = a - two_pi * ((a + T::PI()) / two_pi).floor();
    if w <= -T::PI() {
        w = w + two_pi;
    }
    if w > T::PI() {
        w = w - two_pi;
    }
    w
}
