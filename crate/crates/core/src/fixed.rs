//! Unsigned 18-digit fixed-point decimal.
//!
//! All ledger state, pool reserves, probabilities and factors are stored as
//! `Fixed`. Products of two amounts (the pool invariant `k`) are carried in a
//! 256-bit [`Wide`] at 36 fractional digits so they never lose precision.

use std::fmt;
use std::str::FromStr;

use primitive_types::U256;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// 256-bit intermediate used for exact products and quotients.
pub type Wide = U256;

pub const DECIMALS: u32 = 18;
pub const SCALE: u128 = 1_000_000_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixedError {
    #[error("fixed-point overflow")]
    Overflow,
    #[error("fixed-point underflow (result would be negative)")]
    Underflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid decimal `{0}`")]
    Parse(String),
}

/// Non-negative decimal with exactly 18 fractional digits.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed(u128);

pub type TokenAmount = Fixed;

pub fn scale_wide() -> Wide {
    Wide::from(SCALE)
}

/// `floor(a * b / c)` in 256-bit precision.
pub fn mul_div_floor(a: Wide, b: Wide, c: Wide) -> Result<Wide, FixedError> {
    if c.is_zero() {
        return Err(FixedError::DivisionByZero);
    }
    let p = a.checked_mul(b).ok_or(FixedError::Overflow)?;
    Ok(p / c)
}

/// `ceil(a * b / c)` in 256-bit precision.
pub fn mul_div_ceil(a: Wide, b: Wide, c: Wide) -> Result<Wide, FixedError> {
    if c.is_zero() {
        return Err(FixedError::DivisionByZero);
    }
    let p = a.checked_mul(b).ok_or(FixedError::Overflow)?;
    let (q, r) = p.div_mod(c);
    Ok(if r.is_zero() { q } else { q + Wide::one() })
}

pub fn div_ceil_wide(a: Wide, b: Wide) -> Result<Wide, FixedError> {
    if b.is_zero() {
        return Err(FixedError::DivisionByZero);
    }
    let (q, r) = a.div_mod(b);
    Ok(if r.is_zero() { q } else { q + Wide::one() })
}

fn narrow(w: Wide) -> Result<u128, FixedError> {
    if w > Wide::from(u128::MAX) {
        Err(FixedError::Overflow)
    } else {
        Ok(w.as_u128())
    }
}

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(SCALE);
    /// Smallest representable positive value (one ulp).
    pub const ULP: Fixed = Fixed(1);

    pub const fn from_raw(raw: u128) -> Self {
        Fixed(raw)
    }

    pub const fn raw(self) -> u128 {
        self.0
    }

    pub fn wide(self) -> Wide {
        Wide::from(self.0)
    }

    pub fn from_wide(w: Wide) -> Result<Self, FixedError> {
        narrow(w).map(Fixed)
    }

    pub const fn from_int(n: u64) -> Self {
        Fixed(n as u128 * SCALE)
    }

    /// `num / den`, rounded down.
    pub fn from_ratio(num: u128, den: u128) -> Result<Self, FixedError> {
        Self::from_wide(mul_div_floor(Wide::from(num), scale_wide(), Wide::from(den))?)
    }

    /// Converts a float through its shortest decimal representation; digits
    /// beyond the 18th fractional place are truncated.
    pub fn from_f64(x: f64) -> Result<Self, FixedError> {
        if !x.is_finite() || x < 0.0 {
            return Err(FixedError::Parse(x.to_string()));
        }
        parse_decimal(&format!("{x}"), true)
    }

    pub fn to_f64(self) -> f64 {
        (self.0 / SCALE) as f64 + (self.0 % SCALE) as f64 / SCALE as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: Fixed) -> Result<Fixed, FixedError> {
        self.0.checked_add(rhs.0).map(Fixed).ok_or(FixedError::Overflow)
    }

    pub fn checked_sub(self, rhs: Fixed) -> Result<Fixed, FixedError> {
        self.0.checked_sub(rhs.0).map(Fixed).ok_or(FixedError::Underflow)
    }

    pub fn saturating_sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.saturating_sub(rhs.0))
    }

    pub fn abs_diff(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.abs_diff(rhs.0))
    }

    pub fn checked_mul_int(self, n: u64) -> Result<Fixed, FixedError> {
        self.0.checked_mul(n as u128).map(Fixed).ok_or(FixedError::Overflow)
    }

    pub fn mul_floor(self, rhs: Fixed) -> Result<Fixed, FixedError> {
        Self::from_wide(mul_div_floor(self.wide(), rhs.wide(), scale_wide())?)
    }

    pub fn mul_ceil(self, rhs: Fixed) -> Result<Fixed, FixedError> {
        Self::from_wide(mul_div_ceil(self.wide(), rhs.wide(), scale_wide())?)
    }

    pub fn div_floor(self, rhs: Fixed) -> Result<Fixed, FixedError> {
        Self::from_wide(mul_div_floor(self.wide(), scale_wide(), rhs.wide())?)
    }

    pub fn div_ceil(self, rhs: Fixed) -> Result<Fixed, FixedError> {
        Self::from_wide(mul_div_ceil(self.wide(), scale_wide(), rhs.wide())?)
    }

    /// Raw product at 36 fractional digits, no rounding.
    pub fn wide_product(self, rhs: Fixed) -> Wide {
        // u128 * u128 always fits in 256 bits.
        self.wide() * rhs.wide()
    }

    /// `1 - self`; errors if `self > 1`.
    pub fn complement(self) -> Result<Fixed, FixedError> {
        Fixed::ONE.checked_sub(self)
    }
}

fn parse_decimal(s: &str, truncate: bool) -> Result<Fixed, FixedError> {
    let err = || FixedError::Parse(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    let (int_part, frac_part) = match t.split_once('.') {
        Some((i, f)) => (i, f),
        None => (t, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let frac_part = if frac_part.len() > DECIMALS as usize {
        if !truncate {
            return Err(err());
        }
        &frac_part[..DECIMALS as usize]
    } else {
        frac_part
    };
    let int: u128 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| FixedError::Overflow)? };
    let mut frac: u128 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| err())? };
    for _ in frac_part.len()..DECIMALS as usize {
        frac *= 10;
    }
    int.checked_mul(SCALE).and_then(|v| v.checked_add(frac)).map(Fixed).ok_or(FixedError::Overflow)
}

impl FromStr for Fixed {
    type Err = FixedError;

    /// Parses plain decimal notation with at most 18 fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_decimal(s, false)
    }
}

/// Formats a raw integer carrying `decimals` fractional digits, trimming
/// trailing zeros.
pub fn format_scaled(raw: Wide, decimals: u32) -> String {
    let scale = Wide::exp10(decimals as usize);
    let (int, frac) = raw.div_mod(scale);
    if frac.is_zero() {
        return int.to_string();
    }
    let frac = format!("{:0>width$}", frac.to_string(), width = decimals as usize);
    format!("{}.{}", int, frac.trim_end_matches('0'))
}

/// Formats a pool invariant (36 fractional digits).
pub fn format_wide_product(w: Wide) -> String {
    format_scaled(w, 2 * DECIMALS)
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_scaled(self.wide(), DECIMALS))
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed({self})")
    }
}

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fixed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;

        impl de::Visitor<'_> for Visitor {
            type Value = Fixed;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative decimal number or decimal string")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Fixed, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Fixed, E> {
                Ok(Fixed::from_int(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Fixed, E> {
                u64::try_from(v).map(Fixed::from_int).map_err(|_| E::custom(format!("negative amount {v}")))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Fixed, E> {
                Fixed::from_f64(v).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(Visitor)
    }
}
