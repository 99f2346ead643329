//! Numeric field abstraction shared by the simplex solver and the Kikuchi builders.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational over `i128`, used where magnitudes are known to stay small.
pub type Rational128 = Ratio<i128>;

/// An ordered field, either exact or floating point.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_i128(v: i128) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }
    fn from_big_ratio(v: &BigRational) -> Self;
    fn as_f64(&self) -> f64;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;

    /// Threshold below which a value is treated as zero when pivoting.
    fn tolerance() -> Self;

    fn is_positive_tol(&self) -> bool {
        *self > Self::tolerance()
    }

    fn is_negative_tol(&self) -> bool {
        *self < -Self::tolerance()
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_i128(v: i128) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_big_ratio(v: &BigRational) -> Self {
        big_ratio_to_f64(v)
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn tolerance() -> Self {
        1e-10
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_i128(v: i128) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn from_big_ratio(v: &BigRational) -> Self {
        v.clone()
    }
    fn as_f64(&self) -> f64 {
        big_ratio_to_f64(self)
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn tolerance() -> Self {
        Zero::zero()
    }
}

impl Scalar for Rational128 {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        Ratio::from_integer(v as i128)
    }
    fn from_i128(v: i128) -> Self {
        Ratio::from_integer(v)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Ratio::new(num as i128, den as i128)
    }
    fn from_big_ratio(v: &BigRational) -> Self {
        let n = v.numer().to_i128().expect("numerator exceeds i128");
        let d = v.denom().to_i128().expect("denominator exceeds i128");
        Ratio::new(n, d)
    }
    fn as_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn tolerance() -> Self {
        Zero::zero()
    }
}

/// Converts a big rational to the nearest double, robust to huge numerators and denominators.
pub fn big_ratio_to_f64(v: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (v.numer().to_f64(), v.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let shift = v.numer().bits().max(v.denom().bits()) as i64 - 900;
    let (n, d) = if shift > 0 {
        (v.numer() >> shift as usize, v.denom() >> shift as usize)
    } else {
        (v.numer().clone(), v.denom().clone())
    };
    n.to_f64().unwrap_or(0.0) / d.to_f64().unwrap_or(1.0)
}

/// Exact rational from a double (every finite double is a dyadic rational).
pub fn f64_to_big_ratio(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap_or_else(Zero::zero)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_roundtrip() {
        let r = <BigRational as Scalar>::from_ratio(1, 3);
        assert!((r.as_f64() - 1.0 / 3.0).abs() < 1e-16);
        let s = <Rational128 as Scalar>::from_big_ratio(&r);
        assert_eq!(s, Ratio::new(1, 3));
        assert_eq!(f64_to_big_ratio(0.5), <BigRational as Scalar>::from_ratio(1, 2));
    }

    #[test]
    fn huge_ratio_to_f64() {
        let big = BigInt::from(10).pow(400);
        let r = BigRational::new(big.clone() * 3, big);
        assert!((big_ratio_to_f64(&r) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tolerance_semantics() {
        assert!(!1e-12f64.is_positive_tol());
        assert!(<BigRational as Scalar>::from_ratio(1, 1_000_000_000).is_positive_tol());
    }
}
