//! Scalar abstraction shared by the plain `f64` path and the recording path.
//!
//! Solver, environment and reward code are written once against [`Real`].
//! Both implementations evaluate the same IEEE operations in the same order,
//! so an `f64` rollout and a recorded rollout agree bit for bit.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living in the same context as `self`.
    fn constant(self, c: f64) -> Self;
    /// Same value, no gradient path.
    fn detach(self) -> Self;
    fn abs(self) -> Self;
    fn relu(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn square(self) -> Self;
    /// Ties resolve to `self`.
    fn max(self, other: Self) -> Self;
    /// Ties resolve to `self`.
    fn min(self, other: Self) -> Self;
    /// Left-to-right sum of a non-empty slice.
    fn sum(values: &[Self]) -> Self;
}

#[inline]
pub(crate) fn relu(a: f64) -> f64 {
    if a > 0.0 {
        a
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn max(a: f64, b: f64) -> f64 {
    if a >= b {
        a
    } else {
        b
    }
}

#[inline]
pub(crate) fn min(a: f64, b: f64) -> f64 {
    if a <= b {
        a
    } else {
        b
    }
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn constant(self, c: f64) -> f64 {
        c
    }
    #[inline]
    fn detach(self) -> f64 {
        self
    }
    #[inline]
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    #[inline]
    fn relu(self) -> f64 {
        relu(self)
    }
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    #[inline]
    fn square(self) -> f64 {
        self * self
    }
    #[inline]
    fn max(self, other: f64) -> f64 {
        max(self, other)
    }
    #[inline]
    fn min(self, other: f64) -> f64 {
        min(self, other)
    }
    fn sum(values: &[f64]) -> f64 {
        let mut acc = values[0];
        for v in &values[1..] {
            acc += *v;
        }
        acc
    }
}
