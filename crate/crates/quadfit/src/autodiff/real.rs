//! Scalar abstraction shared by the plain-f64 and the taped evaluation paths.
//!
//! Every differentiable pipeline stage (skinning, projection, silhouettes,
//! losses) is written once over `R: Real` and instantiated with `f64` for
//! fast forward evaluation (data generation, finite differences) and with
//! [`Var`] when gradients are needed.

use super::tape::Var;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Lifts a plain number as a constant (no gradient).
    fn lit(x: f64) -> Self;
    /// Current forward value.
    fn value(self) -> f64;
    /// Same value with upstream gradient edges removed.
    fn detach(self) -> Self;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Logistic function as a single primitive.
    fn sigmoid(self) -> Self;

    /// max{0, x}; subgradient 0 at the kink.
    fn relu(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            Self::lit(0.0)
        }
    }

    /// |x|; picks the +x branch at 0.
    fn abs(self) -> Self {
        if self.value() >= 0.0 {
            self
        } else {
            -self
        }
    }

    fn maxr(self, other: Self) -> Self {
        if self.value() > other.value() {
            self
        } else {
            other
        }
    }

    fn minr(self, other: Self) -> Self {
        if self.value() < other.value() {
            self
        } else {
            other
        }
    }

    fn clamp_r(self, lo: f64, hi: f64) -> Self {
        self.maxr(Self::lit(lo)).minr(Self::lit(hi))
    }

    fn scale(self, c: f64) -> Self {
        self * Self::lit(c)
    }

    fn add_const(self, c: f64) -> Self {
        self + Self::lit(c)
    }

    fn recip(self) -> Self {
        Self::lit(1.0) / self
    }

    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn lit(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn detach(self) -> Self {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn sigmoid(self) -> Self {
        stable_sigmoid(self)
    }
}

pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Real for Var<'t> {
    fn lit(x: f64) -> Self {
        Var::constant(x)
    }
    fn value(self) -> f64 {
        Var::value(self)
    }
    fn detach(self) -> Self {
        Var::detach(self)
    }
    fn exp(self) -> Self {
        let v = self.value().exp();
        self.unary(v, v)
    }
    fn ln(self) -> Self {
        self.unary(self.value().ln(), 1.0 / self.value())
    }
    fn sqrt(self) -> Self {
        let v = self.value().sqrt();
        self.unary(v, 0.5 / v)
    }
    fn sin(self) -> Self {
        self.unary(self.value().sin(), self.value().cos())
    }
    fn cos(self) -> Self {
        self.unary(self.value().cos(), -self.value().sin())
    }
    fn powi(self, n: i32) -> Self {
        let v = self.value().powi(n);
        self.unary(v, n as f64 * self.value().powi(n - 1))
    }
    fn sigmoid(self) -> Self {
        let s = stable_sigmoid(self.value());
        self.unary(s, s * (1.0 - s))
    }
}

/// Sum of a slice, left to right.
pub fn sum<R: Real>(xs: &[R]) -> R {
    let mut acc = R::lit(0.0);
    for &x in xs {
        acc = acc + x;
    }
    acc
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean<R: Real>(xs: &[R]) -> R {
    if xs.is_empty() {
        return R::lit(0.0);
    }
    sum(xs).scale(1.0 / xs.len() as f64)
}
