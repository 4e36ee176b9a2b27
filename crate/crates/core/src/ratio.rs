//! Exact rational scalars.
//!
//! Every probability, correlator and functional in this crate is carried as a
//! [`Ratio`]: an arbitrary-precision fraction kept in lowest terms with a
//! positive denominator.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRatioError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal {0:?}")]
    Invalid(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ratio(BigRational);

impl Ratio {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Ratio(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_integer(n: i64) -> Self {
        Ratio(BigRational::from_integer(n.into()))
    }

    pub fn from_bigints(numer: BigInt, denom: BigInt) -> Self {
        assert!(!denom.is_zero(), "zero denominator");
        Ratio(BigRational::new(numer, denom))
    }

    /// The exact binary value of a finite float.
    pub fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(Ratio)
    }

    pub fn zero() -> Self {
        Ratio(BigRational::zero())
    }

    pub fn one() -> Self {
        Ratio(BigRational::one())
    }

    pub fn half() -> Self {
        Ratio::new(1, 2)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        Ratio(self.0.abs())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn square(&self) -> Self {
        Ratio(&self.0 * &self.0)
    }

    /// `true` when the value lies in the closed unit interval.
    pub fn is_probability(&self) -> bool {
        !self.is_negative() && self <= &Ratio::one()
    }

    pub fn min_of<'a, I: IntoIterator<Item = &'a Ratio>>(values: I) -> Option<Ratio> {
        values.into_iter().min().cloned()
    }

    pub fn max_of<'a, I: IntoIterator<Item = &'a Ratio>>(values: I) -> Option<Ratio> {
        values.into_iter().max().cloned()
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }
}

impl From<BigRational> for Ratio {
    fn from(r: BigRational) -> Self {
        Ratio(r)
    }
}

impl From<i64> for Ratio {
    fn from(n: i64) -> Self {
        Ratio::from_integer(n)
    }
}

/// Lowest-terms `n/d`, always with an explicit denominator.
impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Accepts `n/d`, an integer, or a terminating decimal (`-0.125`, `.5`, `3.`).
/// Decimals convert exactly.
impl FromStr for Ratio {
    type Err = ParseRatioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseRatioError::Empty);
        }
        let invalid = || ParseRatioError::Invalid(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            let n = parse_int(n.trim()).ok_or_else(invalid)?;
            let d = parse_int(d.trim()).ok_or_else(invalid)?;
            if d.is_zero() {
                return Err(ParseRatioError::ZeroDenominator(s.to_string()));
            }
            return Ok(Ratio(BigRational::new(n, d)));
        }
        if let Some((int_part, frac_part)) = s.split_once('.') {
            let (negative, int_digits) = match int_part.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, int_part.strip_prefix('+').unwrap_or(int_part)),
            };
            if int_digits.is_empty() && frac_part.is_empty() {
                return Err(invalid());
            }
            let all_digits = |t: &str| t.bytes().all(|c| c.is_ascii_digit());
            if !all_digits(int_digits) || !all_digits(frac_part) {
                return Err(invalid());
            }
            let digits = format!("{int_digits}{frac_part}");
            let mut numer: BigInt =
                if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| invalid())? };
            if negative {
                numer = -numer;
            }
            let denom = num_traits::pow(BigInt::from(10u8), frac_part.len());
            return Ok(Ratio(BigRational::new(numer, denom)));
        }
        let n = parse_int(s).ok_or_else(invalid)?;
        Ok(Ratio(BigRational::from_integer(n)))
    }
}

fn parse_int(s: &str) -> Option<BigInt> {
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|c| c.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&Ratio> for &Ratio {
            type Output = Ratio;
            fn $method(self, rhs: &Ratio) -> Ratio {
                Ratio((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<Ratio> for Ratio {
            type Output = Ratio;
            fn $method(self, rhs: Ratio) -> Ratio {
                Ratio(self.0.$method(rhs.0))
            }
        }
        impl $trait<&Ratio> for Ratio {
            type Output = Ratio;
            fn $method(self, rhs: &Ratio) -> Ratio {
                Ratio(self.0.$method(&rhs.0))
            }
        }
        impl $trait<Ratio> for &Ratio {
            type Output = Ratio;
            fn $method(self, rhs: Ratio) -> Ratio {
                Ratio((&self.0).$method(rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl AddAssign<&Ratio> for Ratio {
    fn add_assign(&mut self, rhs: &Ratio) {
        self.0 += &rhs.0;
    }
}

impl AddAssign<Ratio> for Ratio {
    fn add_assign(&mut self, rhs: Ratio) {
        self.0 += rhs.0;
    }
}

impl SubAssign<&Ratio> for Ratio {
    fn sub_assign(&mut self, rhs: &Ratio) {
        self.0 -= &rhs.0;
    }
}

impl Neg for Ratio {
    type Output = Ratio;
    fn neg(self) -> Ratio {
        Ratio(-self.0)
    }
}

impl Neg for &Ratio {
    type Output = Ratio;
    fn neg(self) -> Ratio {
        Ratio(-&self.0)
    }
}

impl Sum for Ratio {
    fn sum<I: Iterator<Item = Ratio>>(iter: I) -> Ratio {
        iter.fold(Ratio::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Ratio> for Ratio {
    fn sum<I: Iterator<Item = &'a Ratio>>(iter: I) -> Ratio {
        iter.fold(Ratio::zero(), |acc, x| acc + x)
    }
}

/// `(-1)^bit` as a rational sign.
pub(crate) fn sign(bit: u8) -> Ratio {
    if bit & 1 == 0 {
        Ratio::one()
    } else {
        Ratio::from_integer(-1)
    }
}

/// Compare a nonnegative rational against `sqrt(target)` exactly.
pub fn cmp_sqrt(value: &Ratio, target: &Ratio) -> Ordering {
    debug_assert!(!target.is_negative());
    if value.is_negative() {
        return Ordering::Less;
    }
    value.square().cmp(target)
}

/// Render with 12 significant digits, trailing zeros trimmed.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_decimal_and_integer() {
        assert_eq!("1/3".parse::<Ratio>().unwrap(), Ratio::new(1, 3));
        assert_eq!("0.25".parse::<Ratio>().unwrap(), Ratio::new(1, 4));
        assert_eq!("-1.5".parse::<Ratio>().unwrap(), Ratio::new(-3, 2));
        assert_eq!(".5".parse::<Ratio>().unwrap(), Ratio::half());
        assert_eq!("2/4".parse::<Ratio>().unwrap().to_string(), "1/2");
        assert_eq!("7".parse::<Ratio>().unwrap(), Ratio::from_integer(7));
        assert_eq!("-0".parse::<Ratio>().unwrap(), Ratio::zero());
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!("1/0".parse::<Ratio>(), Err(ParseRatioError::ZeroDenominator(_))));
        assert!("".parse::<Ratio>().is_err());
        assert!("abc".parse::<Ratio>().is_err());
        assert!("1e-3".parse::<Ratio>().is_err());
        assert!(".".parse::<Ratio>().is_err());
        assert!("1/-".parse::<Ratio>().is_err());
        assert!("0.1.2".parse::<Ratio>().is_err());
    }

    #[test]
    fn display_is_lowest_terms_with_denominator() {
        assert_eq!(Ratio::new(6, -4).to_string(), "-3/2");
        assert_eq!(Ratio::zero().to_string(), "0/1");
        assert_eq!(Ratio::one().to_string(), "1/1");
    }

    #[test]
    fn sqrt_comparison_is_exact() {
        // 7/10 < 1/sqrt(2) < 71/100
        let half = Ratio::half();
        assert_eq!(cmp_sqrt(&Ratio::new(7, 10), &half), Ordering::Less);
        assert_eq!(cmp_sqrt(&Ratio::new(71, 100), &half), Ordering::Greater);
        assert_eq!(cmp_sqrt(&Ratio::half(), &Ratio::new(1, 4)), Ordering::Equal);
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(1.0), "1");
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(0.39909698330320425), "0.399096983303");
        assert_eq!(format_sig12(3.2), "3.2");
        assert_eq!(format_sig12(-0.5), "-0.5");
    }
}
