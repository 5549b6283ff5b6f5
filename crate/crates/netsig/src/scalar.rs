//! Scalar abstraction so the numeric core runs on f32 or f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign, ToPrimitive};

/// Floating-point scalar used by all numeric modules.
///
/// The default precision for the library and CLI is `f64`; `f32` is supported
/// for memory-bound experiments at correspondingly looser tolerances.
pub trait Scalar: Float + NumAssign + Sum + Debug + Display + Send + Sync + 'static {
    /// Convert from any primitive number; panics only on values a float
    /// cannot represent at all (never for finite inputs).
    fn cast<T: ToPrimitive>(n: T) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("numeric cast to scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl<T> Scalar for T where T: Float + NumAssign + Sum + Debug + Display + Send + Sync + 'static {}

/// Numerically stable logistic function sigma(x) = 1 / (1 + e^-x).
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Numerically stable log(1 + e^x).
pub fn log1p_exp<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
