//! Forward-mode dual numbers `a + b eps` with `eps^2 = 0`.
//!
//! Risk integrands are written once against [`Scalar`] and run either on
//! plain `f64` (values) or on [`DualScalar`] (directional derivatives).

use std::ops::{Add, Mul, Neg, Sub};

/// Arithmetic needed by the risk integrands.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    /// `|x|` with derivative `sign(x)`, where `sign(0) = 0`.
    fn abs(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn square(self) -> Self {
        self * self
    }

    /// Minimum chosen by comparing values; the derivative follows the branch.
    fn min_by_value(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }

    fn max_by_value(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualScalar {
    pub value: f64,
    pub deriv: f64,
}

impl DualScalar {
    pub fn new(value: f64, deriv: f64) -> Self {
        Self { value, deriv }
    }
}

impl Add for DualScalar {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.value + o.value, self.deriv + o.deriv)
    }
}

impl Sub for DualScalar {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.value - o.value, self.deriv - o.deriv)
    }
}

impl Mul for DualScalar {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.value * o.value, self.value * o.deriv + self.deriv * o.value)
    }
}

impl Neg for DualScalar {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.deriv)
    }
}

impl Mul<f64> for DualScalar {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Self::new(self.value * o, self.deriv * o)
    }
}

impl Add<f64> for DualScalar {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Self::new(self.value + o, self.deriv)
    }
}

impl Sub<f64> for DualScalar {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Self::new(self.value - o, self.deriv)
    }
}

impl Scalar for DualScalar {
    fn constant(v: f64) -> Self {
        Self::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn sin(self) -> Self {
        Self::new(self.value.sin(), self.value.cos() * self.deriv)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        Self::new(e, e * self.deriv)
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        Self::new(s, self.deriv / (2.0 * s))
    }
    fn abs(self) -> Self {
        let sign = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        Self::new(self.value.abs(), sign * self.deriv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: f64, e: f64) -> DualScalar {
        DualScalar::new(v, e)
    }

    #[test]
    fn product_rule() {
        let p = d(2.0, 3.0) * d(5.0, 7.0);
        assert_eq!(p, d(10.0, 2.0 * 7.0 + 3.0 * 5.0));
    }

    #[test]
    fn unary_chain_rule() {
        let x = d(0.7, 1.3);
        assert!((x.sin().deriv - 0.7f64.cos() * 1.3).abs() < 1e-15);
        assert!((x.exp().deriv - 0.7f64.exp() * 1.3).abs() < 1e-15);
        assert!((x.sqrt().deriv - 1.3 / (2.0 * 0.7f64.sqrt())).abs() < 1e-15);
        assert_eq!(x.square(), d(0.7 * 0.7, 2.0 * 0.7 * 1.3));
        assert_eq!(d(-2.0, 1.5).abs(), d(2.0, -1.5));
        assert_eq!(d(0.0, 1.5).abs(), d(0.0, 0.0));
    }

    #[test]
    fn branch_selection_follows_value() {
        assert_eq!(d(1.0, 5.0).min_by_value(d(2.0, -1.0)), d(1.0, 5.0));
        assert_eq!(d(1.0, 5.0).max_by_value(d(2.0, -1.0)), d(2.0, -1.0));
    }

    #[test]
    fn polynomial_derivative_is_exact() {
        // f(x) = 3x^3 - x + 2, f'(x) = 9x^2 - 1
        let f = |x: DualScalar| x * x * x * 3.0 - x + 2.0;
        let y = f(d(1.5, 1.0));
        assert_eq!(y.value, 3.0 * 3.375 - 1.5 + 2.0);
        assert_eq!(y.deriv, 9.0 * 2.25 - 1.0);
    }
}
