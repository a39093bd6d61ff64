//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point types the numeric core can be instantiated with.
///
/// Everything that is pure math (graphs, plant integration, setpoint
/// optimization, perturbation signals) is written against this trait.
/// The simulation and experiment layers use `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Convergence target for balance-type residuals.
    const BALANCE_TOL: f64;
    /// Convergence target for 1-D root solves.
    const ROOT_TOL: f64;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `10^exp` in this type.
    #[inline]
    fn tol(exp: i32) -> Self {
        Self::lit(10.0).powi(exp)
    }
}

impl Scalar for f64 {
    const BALANCE_TOL: f64 = 1e-10;
    const ROOT_TOL: f64 = 1e-12;
}

impl Scalar for f32 {
    const BALANCE_TOL: f64 = 1e-4;
    const ROOT_TOL: f64 = 1e-6;
}

/// Infinity norm of a slice.
pub fn norm_inf<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

pub fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}
