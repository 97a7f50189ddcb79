//! Nested forward-mode dual numbers. `Dual<Dual<f64>>` carries a second
//! mixed partial in its innermost tangent, and so on for deeper nesting.

use std::ops::{Add, Mul, Neg, Sub};

pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn tanh(self) -> Self;
    fn scale(self, a: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn scale(self, a: f64) -> Self {
        self * a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual {
            v: self.v * o.v,
            d: self.v * o.d + self.d * o.v,
        }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual {
            v: -self.v,
            d: -self.d,
        }
    }
}

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual {
            v: T::constant(v),
            d: T::constant(0.0),
        }
    }
    #[inline]
    fn tanh(self) -> Self {
        let y = self.v.tanh();
        Dual {
            v: y,
            d: self.d * (T::constant(1.0) - y * y),
        }
    }
    #[inline]
    fn scale(self, a: f64) -> Self {
        Dual {
            v: self.v.scale(a),
            d: self.d.scale(a),
        }
    }
}

/// Seeding and extraction for a fixed nesting depth.
pub trait Nested: Real {
    /// Input variable `var` with value `value`, differentiated once along
    /// `dirs[level]` at each nesting level.
    fn seed(value: f64, var: usize, dirs: &[usize]) -> Self;
    /// Coefficient of the product of all tangents.
    fn top_derivative(self) -> f64;
}

impl Nested for f64 {
    fn seed(value: f64, _var: usize, _dirs: &[usize]) -> Self {
        value
    }
    fn top_derivative(self) -> f64 {
        self
    }
}

impl<T: Nested> Nested for Dual<T> {
    fn seed(value: f64, var: usize, dirs: &[usize]) -> Self {
        Dual {
            v: T::seed(value, var, &dirs[1..]),
            d: T::constant(if dirs[0] == var { 1.0 } else { 0.0 }),
        }
    }
    fn top_derivative(self) -> f64 {
        self.d.top_derivative()
    }
}
