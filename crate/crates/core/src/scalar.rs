//! The scalar field abstraction.
//!
//! Every algorithm in the crate is written once against [`Scalar`] and runs
//! on two backends: IEEE binary64 (`f64`) and exact arbitrary-precision
//! rationals ([`BigRational`]). The exact backend is what turns the
//! orthogonality and conjugacy identities into checks with tolerance zero.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{NumAssignRef, NumRef, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arithmetic backend tag, as written into traces and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "f64")]
    F64,
    #[serde(rename = "rational")]
    Rational,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::F64 => "f64",
            Backend::Rational => "rational",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Backend::F64),
            "rational" => Ok(Backend::Rational),
            other => Err(Error::InvalidSpec(format!("unknown backend {other:?}"))),
        }
    }
}

/// A field element usable by every routine in the crate.
///
/// Ring operations are exact when [`Scalar::EXACT`] is true. Square roots are
/// only ever used for normalising residuals; on the exact backend they are
/// exact for perfect squares and otherwise carry 64 extra bits, so a zero
/// numerator always yields an exactly zero ratio.
pub trait Scalar:
    Clone + fmt::Debug + fmt::Display + PartialOrd + Signed + NumRef + NumAssignRef + Send + Sync + 'static
{
    const BACKEND: Backend;
    const EXACT: bool;

    fn from_i64(v: i64) -> Self;

    /// Converts a binary64 value. Exact on both backends; `None` for NaN/inf.
    fn from_f64(v: f64) -> Option<Self>;

    fn to_f64(&self) -> f64;

    fn sqrt(&self) -> Self;

    /// Unit roundoff of the backend; zero when arithmetic is exact.
    fn epsilon() -> Self;

    /// Parses an integer, a decimal (`0.25`, `1e-3`) or a fraction `p/q`.
    fn parse_literal(s: &str) -> Result<Self>;

    /// Lossless textual form, accepted back by [`Scalar::parse_literal`].
    fn to_literal(&self) -> String;

    fn from_ratio(p: i64, q: i64) -> Self {
        Self::from_i64(p) / Self::from_i64(q)
    }

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }

    fn is_finite_value(&self) -> bool {
        true
    }
}

impl Scalar for f64 {
    const BACKEND: Backend = Backend::F64;
    const EXACT: bool = false;

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn from_f64(v: f64) -> Option<Self> {
        v.is_finite().then_some(v)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }

    fn epsilon() -> Self {
        f64::EPSILON
    }

    fn parse_literal(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: f64 = p.trim().parse().map_err(|_| Error::ParseScalar(s.to_string()))?;
            let q: f64 = q.trim().parse().map_err(|_| Error::ParseScalar(s.to_string()))?;
            if q == 0.0 {
                return Err(Error::ParseScalar(s.to_string()));
            }
            return Ok(p / q);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::ParseScalar(s.to_string())),
        }
    }

    fn to_literal(&self) -> String {
        // Debug formatting is the shortest string that round-trips bitwise.
        format!("{self:?}")
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for BigRational {
    const BACKEND: Backend = Backend::Rational;
    const EXACT: bool = true;

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_f64(v: f64) -> Option<Self> {
        BigRational::from_float(v)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // Ratio::to_f64 gives up on huge numerators/denominators; fall back
            // to comparing bit lengths.
            let shift = self.numer().bits() as i64 - self.denom().bits() as i64;
            let scaled = if shift >= 0 {
                BigRational::new(self.numer().clone(), self.denom().clone() << shift as usize)
            } else {
                BigRational::new(self.numer().clone() << (-shift) as usize, self.denom().clone())
            };
            ToPrimitive::to_f64(&scaled).unwrap_or(0.0) * 2f64.powi(shift as i32)
        })
    }

    fn sqrt(&self) -> Self {
        if !self.is_positive() {
            return BigRational::zero();
        }
        let (p, q) = (self.numer(), self.denom());
        let (rp, rq) = (p.sqrt(), q.sqrt());
        if &(&rp * &rp) == p && &(&rq * &rq) == q {
            return BigRational::new(rp, rq);
        }
        // sqrt(p/q) = sqrt(p q) / q, evaluated with 64 guard bits.
        let scaled: BigInt = (p * q) << 128usize;
        BigRational::new(scaled.sqrt(), q << 64usize)
    }

    fn epsilon() -> Self {
        BigRational::zero()
    }

    fn parse_literal(s: &str) -> Result<Self> {
        parse_exact(s.trim()).ok_or_else(|| Error::ParseScalar(s.to_string()))
    }

    fn to_literal(&self) -> String {
        self.to_string()
    }
}

fn parse_exact(s: &str) -> Option<BigRational> {
    if let Some((p, q)) = s.split_once('/') {
        let p = parse_exact(p.trim())?;
        let q = parse_exact(q.trim())?;
        if q.is_zero() {
            return None;
        }
        return Some(p / q);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer = BigInt::from_str(&all_digits).ok()?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u8);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// Largest absolute value in a slice, zero for an empty slice.
pub(crate) fn max_abs<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values
        .into_iter()
        .map(|v| v.abs())
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc })
}

/// `|num| / den`, with `0/0` (and anything over a zero denominator) read as a
/// vacuous zero residual.
pub(crate) fn relative<T: Scalar>(num: T, den: T) -> T {
    if den.is_zero() {
        T::zero()
    } else {
        num.abs() / den
    }
}

pub(crate) fn max_of<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}
