//! Exact rationals at the configuration boundary: values are written as
//! `"p/q"` (or a bare integer) and parsed without rounding.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RatioParseError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal {0:?}: expected \"p\" or \"p/q\" with integer p, q")]
    Malformed(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

/// Parses `"p/q"` or `"p"` into an exact rational. Whitespace around either
/// integer is accepted; decimals are not (a decimal would silently round).
pub fn parse_ratio(s: &str) -> Result<BigRational, RatioParseError> {
    let t = s.trim();
    if t.is_empty() {
        return Err(RatioParseError::Empty);
    }
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (t, None),
    };
    let n = BigInt::from_str(num).map_err(|_| RatioParseError::Malformed(s.to_string()))?;
    let d = match den {
        Some(d) => BigInt::from_str(d).map_err(|_| RatioParseError::Malformed(s.to_string()))?,
        None => BigInt::from(1),
    };
    if d.is_zero() {
        return Err(RatioParseError::ZeroDenominator(s.to_string()));
    }
    Ok(BigRational::new(n, d))
}

/// Formats in the same shape `parse_ratio` reads: `"p/q"`, or `"p"` when the
/// denominator is 1.
pub fn format_ratio(r: &BigRational) -> String {
    r.to_string()
}

pub fn to_f64(r: &BigRational) -> f64 {
    num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

/// Serde adapter for a single rational field stored as a string.
pub mod ratio_serde {
    use super::*;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ratio(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let raw = String::deserialize(d)?;
        parse_ratio(&raw).map_err(de::Error::custom)
    }
}

/// Serde adapter for `Vec<BigRational>` stored as a string array.
pub mod ratio_vec_serde {
    use super::*;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(format_ratio))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| parse_ratio(s).map_err(de::Error::custom))
            .collect()
    }
}
