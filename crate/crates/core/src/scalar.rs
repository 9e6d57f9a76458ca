//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating point type the simulator can run on (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion back to `f64`, used at IO boundaries.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn two_pi() -> Self {
        Self::TAU()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Unit phasor `exp(j*angle)` built from the angle so that its modulus is exact.
#[inline]
pub fn phasor<T: Scalar>(angle: T) -> Complex<T> {
    let (s, c) = angle.sin_cos();
    Complex::new(c, s)
}

/// `|z|^2` without the square root.
#[inline]
pub fn power<T: Scalar>(z: Complex<T>) -> T {
    z.norm_sqr()
}

/// Unwraps a sequence of wrapped phases in place (jumps larger than pi are folded).
pub fn unwrap_phase<T: Scalar>(phases: &mut [T]) {
    let tau = T::two_pi();
    let pi = T::PI();
    let mut offset = T::zero();
    for i in 1..phases.len() {
        let prev = phases[i - 1];
        let mut cur = phases[i] + offset;
        while cur - prev > pi {
            cur = cur - tau;
            offset = offset - tau;
        }
        while cur - prev < -pi {
            cur = cur + tau;
            offset = offset + tau;
        }
        phases[i] = cur;
    }
}

/// Wraps an angle into `[0, 2pi)`.
#[inline]
pub fn wrap_phase<T: Scalar>(angle: T) -> T {
    let tau = T::two_pi();
    let mut w = angle % tau;
    if w < T::zero() {
        w = w + tau;
    }
    if w >= tau {
        w = w - tau;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwrap_removes_jumps() {
        let mut p = vec![3.0_f64, -3.0, -2.9];
        unwrap_phase(&mut p);
        assert!((p[1] - (-3.0 + std::f64::consts::TAU)).abs() < 1e-12);
        assert!((p[2] - p[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn wrap_stays_in_range() {
        for x in [-7.0_f64, -0.0, 0.0, 6.2, 100.0, -1e-18] {
            let w = wrap_phase(x);
            assert!((0.0..std::f64::consts::TAU).contains(&w), "{x} -> {w}");
        }
    }

    #[test]
    fn phasor_has_unit_modulus() {
        for k in 0..100 {
            let z = phasor(k as f32 * 0.37);
            assert!((z.norm() - 1.0).abs() < 1e-6);
        }
    }
}
