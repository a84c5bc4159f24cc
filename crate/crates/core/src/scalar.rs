//! Floating-point scalar abstraction shared by every numerical module.

use core::fmt::{Debug, Display};
use core::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, panicking only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    /// Convergence floor used by iterative kernels: `max(1e-14, 16 eps)`.
    #[inline]
    fn kernel_tolerance() -> Self {
        let floor = Self::lit(1e-14);
        let eps = Self::epsilon() * Self::lit(16.0);
        if eps > floor {
            eps
        } else {
            floor
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase<T: Real>(phase: T) -> T {
    let two_pi = T::TAU();
    let mut p = phase % two_pi;
    if p <= -T::PI() {
        p += two_pi;
    } else if p > T::PI() {
        p -= two_pi;
    }
    p
}

/// Shortest angular distance between two phases, in `[0, pi]`.
pub fn phase_distance<T: Real>(a: T, b: T) -> T {
    wrap_phase(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_keeps_principal_interval() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5_f64) - 0.5).abs() < 1e-15);
        assert!((wrap_phase(-2.0 * PI + 0.25_f64) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn distance_treats_minus_pi_as_pi() {
        assert!(phase_distance(-PI + 1e-15, PI) < 1e-12);
        assert!((phase_distance(0.0, PI) - PI).abs() < 1e-15);
    }

    #[test]
    fn tolerance_depends_on_precision() {
        assert_eq!(f64::kernel_tolerance(), 1e-14);
        assert!(f32::kernel_tolerance() > 1e-7);
    }
}
