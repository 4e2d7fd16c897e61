use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: u64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseRationalError(pub String);

impl fmt::Display for ParseRationalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not a rational number: {:?} (expected p or p/q)", self.0)
    }
}

impl std::error::Error for ParseRationalError {}

/// Accepts `p`, `p/q` and surrounding whitespace. Zero denominators are rejected.
pub fn parse_rational(s: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let t = s.trim();
    match t.split_once('/') {
        Some((p, q)) => {
            let p = BigInt::from_str(p.trim()).map_err(|_| err())?;
            let q = BigInt::from_str(q.trim()).map_err(|_| err())?;
            if q.is_zero() {
                return Err(err());
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(Rational::from_integer(BigInt::from_str(t).map_err(|_| err())?)),
    }
}

/// Smallest k ≥ 0 with base^k ≥ x. `base` must exceed 1.
pub fn ceil_log(base: &Rational, x: &Rational) -> u32 {
    assert!(*base > Rational::one(), "ceil_log base must exceed 1");
    let mut k = 0;
    let mut acc = Rational::one();
    while acc < *x {
        acc *= base;
        k += 1;
    }
    k
}

/// Number of bits needed to transmit numerator and denominator.
pub fn bit_len(r: &Rational) -> usize {
    let num = r.numer().abs().bits() as usize;
    let den = r.denom().bits() as usize;
    num.max(1) + den.max(1) + usize::from(r.is_negative())
}

pub fn max0(r: Rational) -> Rational {
    if r.is_negative() {
        Rational::zero()
    } else {
        r
    }
}

/// Serde adapter writing rationals as `"p/q"` strings.
pub mod serde_str {
    use super::{parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("1/4").unwrap(), rat(1, 4));
        assert_eq!(parse_rational(" 3 ").unwrap(), int(3));
        assert_eq!(parse_rational("2/8").unwrap(), rat(1, 4));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn lowest_terms_and_display() {
        assert_eq!(rat(6, 8).to_string(), "3/4");
        assert_eq!(int(5).to_string(), "5");
    }

    #[test]
    fn ceil_log_small() {
        assert_eq!(ceil_log(&int(2), &int(1)), 0);
        assert_eq!(ceil_log(&int(2), &int(8)), 3);
        assert_eq!(ceil_log(&int(2), &int(9)), 4);
        assert_eq!(ceil_log(&rat(5, 4), &rat(25, 16)), 2);
    }
}
