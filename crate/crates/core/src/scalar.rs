use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the solver and the provisioning algorithms are generic over.
///
/// Each implementation carries the tolerances used for pivoting and for
/// schedule checks, since they depend on the precision of the type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Pivot and feasibility tolerance inside the simplex.
    fn lp_tolerance() -> Self;

    /// Tolerance used when checking schedules against constraints.
    fn check_tolerance() -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits scalar")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn lp_tolerance() -> Self {
        1e-9
    }

    fn check_tolerance() -> Self {
        1e-6
    }
}

impl Scalar for f32 {
    fn lp_tolerance() -> Self {
        1e-5
    }

    fn check_tolerance() -> Self {
        1e-3
    }
}

/// Clamps values within `tol` of a bound onto that bound.
pub(crate) fn snap<T: Scalar>(v: T, lo: T, hi: T, tol: T) -> T {
    if v < lo + tol && v > lo - tol {
        lo
    } else if v > hi - tol && v < hi + tol {
        hi
    } else {
        v
    }
}

pub(crate) fn prefix_sums<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut acc = T::zero();
    values
        .iter()
        .map(|&v| {
            acc = acc + v;
            acc
        })
        .collect()
}
