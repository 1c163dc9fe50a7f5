// SPDX-License-Identifier: Apache-2.0

//! Scalar abstraction for the exact piecewise-linear machinery.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating point: f32 or f64.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant, panicking only if the type cannot hold it at all.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Tolerance for algebraic identities that should hold up to rounding.
    fn exact_tol() -> Self;
}

impl Real for f32 {
    fn exact_tol() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn exact_tol() -> Self {
        1e-12
    }
}
