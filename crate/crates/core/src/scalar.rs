//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! The timing recurrence, the planner and the trainer are written once
//! against [`Scalar`] and instantiated with `f64` for production runs, `f32`
//! where memory matters, and [`BigRational`] when an identity has to hold
//! with zero tolerance.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Real-number type usable by the pipeline model, planner and trainer.
pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// `true` when arithmetic is exact (no rounding).
    const EXACT: bool;

    /// Absolute tolerance used by [`Scalar::approx_eq`]; zero for exact types.
    fn tolerance() -> Self;

    /// Converts an `f64` without rounding where the target can represent it.
    fn from_f64_exact(x: f64) -> Option<Self>;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(&self) -> bool;

    /// Ceiling that snaps values within rounding noise of an integer onto it.
    ///
    /// For floats, `(0.1 + 1.0) / 0.1` evaluates to `11.000000000000002`;
    /// a plain ceiling would return 12.
    fn ceil_snap(&self) -> Self;

    /// `self^(-n)`; floats switch to log space for large `n`.
    fn recip_powi(&self, n: u32) -> Self;

    fn approx_eq(&self, other: &Self) -> bool {
        (self.clone() - other.clone()).abs() <= Self::tolerance()
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits every scalar type")
    }
}

pub fn max_of<S: Scalar>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

pub fn min_of<S: Scalar>(a: S, b: S) -> S {
    if b < a {
        b
    } else {
        a
    }
}

/// Threshold above which float powers are evaluated in log space.
const LOG_SPACE_POWER: u32 = 64;

macro_rules! impl_float_scalar {
    ($t:ty, $tol:expr, $snap:expr) => {
        impl Scalar for $t {
            const EXACT: bool = false;

            fn tolerance() -> Self {
                $tol
            }

            fn from_f64_exact(x: f64) -> Option<Self> {
                let y = x as $t;
                (y as f64 == x || !x.is_finite()).then_some(y)
            }

            fn is_finite_value(&self) -> bool {
                self.is_finite()
            }

            fn ceil_snap(&self) -> Self {
                let r = self.round();
                if (self - r).abs() <= $snap * r.abs().max(1.0) {
                    r
                } else {
                    self.ceil()
                }
            }

            fn recip_powi(&self, n: u32) -> Self {
                if n <= LOG_SPACE_POWER {
                    self.powi(n as i32).recip()
                } else {
                    (-(n as $t) * self.ln()).exp()
                }
            }
        }
    };
}

impl_float_scalar!(f64, 1e-9, 1e-12);
impl_float_scalar!(f32, 1e-5, 1e-6);

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn tolerance() -> Self {
        Self::zero()
    }

    fn from_f64_exact(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }

    fn is_finite_value(&self) -> bool {
        true
    }

    fn ceil_snap(&self) -> Self {
        self.ceil()
    }

    fn recip_powi(&self, n: u32) -> Self {
        num_traits::pow(self.clone(), n as usize).recip()
    }
}

/// Builds an exact rational `num/den`.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational from an integer.
pub fn integer(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}
