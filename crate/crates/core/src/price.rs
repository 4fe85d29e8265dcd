//! Exact rational prices.
//!
//! Every quantity that flows through the auction rules and protocols is a
//! [`Price`]: a reduced fraction of two `i128`s. Floating point only shows up
//! in Monte-Carlo aggregates (see `experiments`).

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(Ratio<i128>);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse `{input}` as an exact price: {reason}")]
pub struct ParsePriceError {
    input: String,
    reason: &'static str,
}

impl ParsePriceError {
    fn new(input: &str, reason: &'static str) -> Self {
        Self {
            input: input.to_string(),
            reason,
        }
    }
}

impl Price {
    pub const ZERO: Price = Price(Ratio::new_raw(0, 1));
    pub const ONE: Price = Price(Ratio::new_raw(1, 1));

    pub fn new(numer: i128, denom: i128) -> Self {
        Price(Ratio::new(numer, denom))
    }

    pub fn from_int(v: i64) -> Self {
        Price(Ratio::from_integer(v as i128))
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Price(self.0.abs())
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// Nearest multiple of `2^-bits`, used to turn a floating-point search
    /// result back into an exact parameter.
    pub fn from_f64_dyadic(v: f64, bits: u32) -> Self {
        let scale = (1i128 << bits) as f64;
        Price::new((v * scale).round() as i128, 1i128 << bits)
    }

    pub fn midpoint(a: Price, b: Price) -> Price {
        (a + b) / Price::from_int(2)
    }

    /// The rational with the smallest denominator inside `[lo, hi]`
    /// (Stern–Brocot descent). `lo <= hi` is required.
    pub fn simplest_between(lo: Price, hi: Price) -> Price {
        assert!(lo <= hi, "empty interval");
        if lo.is_negative() && !hi.is_negative() {
            return Price::ZERO;
        }
        if hi.is_negative() {
            return -Price::simplest_between(-hi, -lo);
        }
        let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
        // Iterative continued-fraction walk over the interval endpoints.
        let (mut ln, mut ld) = (lo.numer(), lo.denom());
        let (mut hn, mut hd) = (hi.numer(), hi.denom());
        loop {
            let a = Integer::div_floor(&ln, &ld);
            // `a` is the common integer part; check whether an integer fits.
            if a * ld == ln || (a + 1) * hd <= hn {
                let k = if a * ld == ln { a } else { a + 1 };
                return Price::new(k * p1 + p0, k * q1 + q0);
            }
            let (np, nq) = (a * p1 + p0, a * q1 + q0);
            p0 = p1;
            q0 = q1;
            p1 = np;
            q1 = nq;
            // Recurse on reciprocals of the fractional parts; the order flips.
            let (lr_n, lr_d) = (ln - a * ld, ld);
            let (hr_n, hr_d) = (hn - a * hd, hd);
            ln = hr_d;
            ld = hr_n;
            hn = lr_d;
            hd = lr_n;
        }
    }

    /// Smallest common denominator of all given prices.
    pub fn common_denominator<'a>(prices: impl IntoIterator<Item = &'a Price>) -> i128 {
        prices.into_iter().fold(1i128, |acc, p| acc.lcm(&p.denom()))
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, d) = (self.numer(), self.denom());
        if d == 1 {
            return write!(f, "{n}");
        }
        // Terminating decimal iff the denominator has only 2s and 5s.
        let (mut rest, mut twos, mut fives) = (d, 0u32, 0u32);
        while rest % 2 == 0 {
            rest /= 2;
            twos += 1;
        }
        while rest % 5 == 0 {
            rest /= 5;
            fives += 1;
        }
        let digits = twos.max(fives);
        if rest != 1 || digits > 30 || n.unsigned_abs() > i128::MAX as u128 / 10u128.pow(digits) {
            return write!(f, "{n}/{d}");
        }
        let scaled = n * (10i128.pow(digits) / d);
        let sign = if scaled < 0 { "-" } else { "" };
        let mag = scaled.unsigned_abs();
        let base = 10u128.pow(digits);
        write!(f, "{sign}{}.{:0width$}", mag / base, mag % base, width = digits as usize)
    }
}

impl fmt::Debug for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Price {
    type Err = ParsePriceError;

    /// Accepts `n/d`, or a decimal with optional sign, fraction and exponent
    /// (`-12`, `0.125`, `3e-2`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() {
            return Err(ParsePriceError::new(s, "empty"));
        }
        if let Some((n, d)) = t.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| ParsePriceError::new(s, "bad numerator"))?;
            let d: i128 = d.trim().parse().map_err(|_| ParsePriceError::new(s, "bad denominator"))?;
            if d == 0 {
                return Err(ParsePriceError::new(s, "zero denominator"));
            }
            return Ok(Price::new(n, d));
        }
        let (mantissa, exp) = match t.find(['e', 'E']) {
            Some(i) => {
                let e: i32 = t[i + 1..].parse().map_err(|_| ParsePriceError::new(s, "bad exponent"))?;
                (&t[..i], e)
            }
            None => (t, 0),
        };
        let (neg, body) = match mantissa.as_bytes().first() {
            Some(b'-') => (true, &mantissa[1..]),
            Some(b'+') => (false, &mantissa[1..]),
            _ => (false, mantissa),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(ParsePriceError::new(s, "no digits"));
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(ParsePriceError::new(s, "not a number"));
        }
        let digits = format!("{int_part}{frac_part}");
        if digits.len() > 36 {
            return Err(ParsePriceError::new(s, "too many digits"));
        }
        let mut numer: i128 = digits.parse().unwrap_or(0);
        let scale = exp - frac_part.len() as i32;
        if scale.unsigned_abs() > 36 {
            return Err(ParsePriceError::new(s, "exponent out of range"));
        }
        let mut denom: i128 = 1;
        if scale >= 0 {
            numer = numer
                .checked_mul(10i128.pow(scale as u32))
                .ok_or_else(|| ParsePriceError::new(s, "overflow"))?;
        } else {
            denom = 10i128.pow((-scale) as u32);
        }
        if neg {
            numer = -numer;
        }
        Ok(Price::new(numer, denom))
    }
}

impl From<i64> for Price {
    fn from(v: i64) -> Self {
        Price::from_int(v)
    }
}

impl Serialize for Price {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Accepts `"n/d"` and decimal strings, integers, and floats (read through
/// their shortest decimal form).
impl<'de> Deserialize<'de> for Price {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PriceVisitor;

        impl serde::de::Visitor<'_> for PriceVisitor {
            type Value = Price;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a price as a number or a decimal / fraction string")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Price, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Price, E> {
                Ok(Price::from_int(v))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Price, E> {
                i64::try_from(v).map(Price::from_int).map_err(E::custom)
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<Price, E> {
                if !v.is_finite() {
                    return Err(E::custom("price must be finite"));
                }
                format!("{v:?}").parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(PriceVisitor)
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident, $atr:ident, $af:ident) => {
        impl $tr for Price {
            type Output = Price;
            fn $f(self, rhs: Price) -> Price {
                Price(self.0.$f(rhs.0))
            }
        }
        impl $atr for Price {
            fn $af(&mut self, rhs: Price) {
                self.0 = self.0.$f(rhs.0);
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign);
binop!(Sub, sub, SubAssign, sub_assign);

impl Mul for Price {
    type Output = Price;
    fn mul(self, rhs: Price) -> Price {
        Price(self.0 * rhs.0)
    }
}

impl Div for Price {
    type Output = Price;
    fn div(self, rhs: Price) -> Price {
        Price(self.0 / rhs.0)
    }
}

impl Neg for Price {
    type Output = Price;
    fn neg(self) -> Price {
        Price(-self.0)
    }
}

impl Sum for Price {
    fn sum<I: Iterator<Item = Price>>(iter: I) -> Price {
        iter.fold(Price::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Price> for Price {
    fn sum<I: Iterator<Item = &'a Price>>(iter: I) -> Price {
        iter.fold(Price::ZERO, |a, b| a + *b)
    }
}

impl One for Price {
    fn one() -> Self {
        Price::ONE
    }
}

impl Zero for Price {
    fn zero() -> Self {
        Price::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

/// A price extended with the `±∞` sentinels used for bids past the end of a
/// curve (`S_{n+1} = +∞`, `B_{n+1} = −∞`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    NegInf,
    Finite(Price),
    PosInf,
}

impl Bound {
    pub fn finite(self) -> Option<Price> {
        match self {
            Bound::Finite(p) => Some(p),
            _ => None,
        }
    }

    pub fn max(self, other: Bound) -> Bound {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Bound) -> Bound {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl From<Price> for Bound {
    fn from(p: Price) -> Self {
        Bound::Finite(p)
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        use Bound::*;
        match (self, other) {
            (Finite(a), Finite(b)) => a.cmp(b),
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
        }
    }
}
