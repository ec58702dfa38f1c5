//! Scalar abstraction: every numeric routine in this crate is generic over a
//! real scalar type implementing [`Real`].

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {
    /// Machine epsilon of the concrete type.
    const EPS: Self;

    /// Convert an `f64` constant into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }

    /// Lossy view as `f64` (exact for `f64`, widened for `f32`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar converts to f64")
    }
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_round_trip() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(1.5), 1.5f32);
        assert_eq!(1.25f32.as_f64(), 1.25);
    }
}
