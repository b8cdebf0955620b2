//! Exact complex-rational numbers.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Largest result (in bits of numerator plus denominator) an exponentiation may produce.
pub const MAX_POW_BITS: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("exponent must be a nonzero real integer")]
    BadExponent,
    #[error("result too large")]
    TooLarge,
}

/// Binary operation on the stack calculator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Mul,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Mul => '*',
            BinOp::Pow => '^',
        }
    }
}

/// A complex number with exact rational real and imaginary parts.
///
/// `BigRational` keeps every fraction reduced with a positive denominator, so
/// structural equality is numeric equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Number {
    re: BigRational,
    im: BigRational,
}

impl Number {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Number { re, im }
    }

    pub fn real(re: BigRational) -> Self {
        Number { re, im: BigRational::zero() }
    }

    pub fn int(n: i64) -> Self {
        Number::real(BigRational::from_integer(n.into()))
    }

    /// `p/q`; panics on `q == 0`.
    pub fn ratio(p: i64, q: i64) -> Self {
        Number::real(BigRational::new(p.into(), q.into()))
    }

    pub fn complex(re: BigRational, im: BigRational) -> Self {
        Number { re, im }
    }

    pub fn i() -> Self {
        Number { re: BigRational::zero(), im: BigRational::one() }
    }

    pub fn zero() -> Self {
        Number::int(0)
    }

    pub fn one() -> Self {
        Number::int(1)
    }

    pub fn re(&self) -> &BigRational {
        &self.re
    }

    pub fn im(&self) -> &BigRational {
        &self.im
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.is_real() && self.re.is_integer()
    }

    /// Real integer value, if this is one and it fits.
    pub fn as_i64(&self) -> Option<i64> {
        if self.is_integer() {
            self.re.to_integer().to_i64()
        } else {
            None
        }
    }

    pub fn is_negative_real(&self) -> bool {
        self.is_real() && self.re.is_negative()
    }

    pub fn neg(&self) -> Number {
        Number { re: -&self.re, im: -&self.im }
    }

    pub fn add(&self, other: &Number) -> Number {
        Number { re: &self.re + &other.re, im: &self.im + &other.im }
    }

    pub fn sub(&self, other: &Number) -> Number {
        Number { re: &self.re - &other.re, im: &self.im - &other.im }
    }

    pub fn mul(&self, other: &Number) -> Number {
        if self.is_real() && other.is_real() {
            return Number::real(&self.re * &other.re);
        }
        Number {
            re: &self.re * &other.re - &self.im * &other.im,
            im: &self.re * &other.im + &self.im * &other.re,
        }
    }

    pub fn recip(&self) -> Result<Number, ArithError> {
        if self.is_zero() {
            return Err(ArithError::DivisionByZero);
        }
        if self.is_real() {
            return Ok(Number::real(self.re.recip()));
        }
        let norm = &self.re * &self.re + &self.im * &self.im;
        Ok(Number { re: &self.re / &norm, im: -&self.im / &norm })
    }

    pub fn div(&self, other: &Number) -> Result<Number, ArithError> {
        Ok(self.mul(&other.recip()?))
    }

    /// Rough size of the exact representation in bits.
    pub fn bits(&self) -> u64 {
        let b = |r: &BigRational| r.numer().bits() + r.denom().bits();
        b(&self.re) + b(&self.im)
    }

    /// Integer power; negative exponents invert. Refuses results above `MAX_POW_BITS`.
    pub fn pow(&self, exp: &BigInt) -> Result<Number, ArithError> {
        if exp.is_zero() {
            return Ok(Number::one());
        }
        if self.is_zero() {
            return if exp.is_negative() { Err(ArithError::DivisionByZero) } else { Ok(Number::zero()) };
        }
        let base = if exp.is_negative() { self.recip()? } else { self.clone() };
        // |z| == 1 with integer parts only happens for units, which never grow.
        let unit = base.re.is_integer()
            && base.im.is_integer()
            && (&base.re * &base.re + &base.im * &base.im).is_one();
        let mag = exp.abs().to_u64().ok_or(ArithError::TooLarge)?;
        if !unit && base.bits().saturating_mul(mag) > MAX_POW_BITS {
            return Err(ArithError::TooLarge);
        }
        let mut result = Number::one();
        let mut sq = base;
        let mut e = mag;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&sq);
            }
            e >>= 1;
            if e > 0 {
                sq = sq.mul(&sq);
            }
        }
        Ok(result)
    }

    /// True when both parts lie within `[-cap, cap]`.
    pub fn within(&self, cap: i64) -> bool {
        let c = BigRational::from_integer(cap.into());
        self.re.abs() <= c && self.im.abs() <= c
    }

    pub fn re_f64(&self) -> f64 {
        self.re.to_f64().unwrap_or(f64::NAN)
    }

    pub fn im_f64(&self) -> f64 {
        self.im.to_f64().unwrap_or(f64::NAN)
    }
}

/// Apply a stack operation to two numbers. For `Pow`, `b` must be a nonzero
/// real integer and `a` nonzero.
pub fn combine_numbers(a: &Number, b: &Number, op: BinOp) -> Result<Number, ArithError> {
    match op {
        BinOp::Add => Ok(a.add(b)),
        BinOp::Mul => Ok(a.mul(b)),
        BinOp::Pow => {
            if !b.is_integer() || b.is_zero() {
                return Err(ArithError::BadExponent);
            }
            if a.is_zero() {
                return Err(ArithError::DivisionByZero);
            }
            a.pow(b.re.numer())
        }
    }
}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        self.re.cmp(&other.re).then_with(|| self.im.cmp(&other.im))
    }
}

fn fmt_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for Number {
    /// Literal form: `5`, `-1/5`, `I`, `-I`, `(2*I)`, `(2 - I)`, `(1/2 + 3/4*I)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_real() {
            return f.write_str(&fmt_rational(&self.re));
        }
        let im_abs = self.im.abs();
        if self.re.is_zero() {
            return if im_abs.is_one() {
                f.write_str(if self.im.is_negative() { "-I" } else { "I" })
            } else {
                write!(f, "({}*I)", fmt_rational(&self.im))
            };
        }
        let sign = if self.im.is_negative() { '-' } else { '+' };
        let im_text = if im_abs.is_one() { "I".to_string() } else { format!("{}*I", fmt_rational(&im_abs)) };
        write!(f, "({} {} {})", fmt_rational(&self.re), sign, im_text)
    }
}
