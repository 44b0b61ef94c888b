//! Exact rational helpers shared by every module.
//!
//! Rationals travel through external formats as `"p/q"` strings so exact
//! invariants survive a round trip through JSON or CSV.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `"p/q"` or a bare integer `"p"`.
pub fn parse(s: &str) -> Result<Rational> {
    let bad = || Error::ParseRational(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
            let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(p, q))
        }
        None => BigInt::from_str(s)
            .map(Rational::from_integer)
            .map_err(|_| bad()),
    }
}

/// Always `"p/q"`, including integers (`"1/1"`).
pub fn format(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    // Scale both parts to 64 significant bits before dividing so huge
    // numerators and denominators do not overflow to inf/inf.
    let (n_m, n_e) = top_bits(r.numer().magnitude());
    let (d_m, d_e) = top_bits(r.denom().magnitude());
    let out = scale_pow2(n_m / d_m, n_e - d_e);
    if r.is_negative() {
        -out
    } else {
        out
    }
}

/// Natural log of a positive rational, accurate to f64 precision for any size.
pub fn ln(r: &Rational) -> f64 {
    debug_assert!(r.is_positive(), "ln of non-positive rational");
    ln_uint(r.numer().magnitude()) - ln_uint(r.denom().magnitude())
}

fn ln_uint(n: &BigUint) -> f64 {
    let (m, e) = top_bits(n);
    m.ln() + (e as f64) * std::f64::consts::LN_2
}

/// `n ≈ m · 2^e` with `m` holding the top 64 bits.
fn top_bits(n: &BigUint) -> (f64, i64) {
    let bits = n.bits() as i64;
    if bits <= 64 {
        return (n.to_u64().unwrap_or(0) as f64, 0);
    }
    let shift = bits - 64;
    let top: BigUint = n >> (shift as usize);
    (top.to_u64().unwrap_or(u64::MAX) as f64, shift)
}

fn scale_pow2(mut v: f64, mut exp: i64) -> f64 {
    while exp > 1000 {
        v *= 2f64.powi(1000);
        exp -= 1000;
        if v.is_infinite() {
            return v;
        }
    }
    while exp < -1000 {
        v *= 2f64.powi(-1000);
        exp += 1000;
        if v == 0.0 {
            return v;
        }
    }
    v * 2f64.powi(exp as i32)
}

pub fn floor_int(r: &Rational) -> BigInt {
    r.numer().div_floor(r.denom())
}

pub fn ceil_int(r: &Rational) -> BigInt {
    let (q, rem) = r.numer().div_rem(r.denom());
    if rem.is_zero() {
        q
    } else if rem.sign() == Sign::Plus {
        q + BigInt::one()
    } else {
        q
    }
}

pub fn min<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if a <= b {
        a
    } else {
        b
    }
}

pub fn max<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if a >= b {
        a
    } else {
        b
    }
}

pub fn product<'a>(items: impl IntoIterator<Item = &'a Rational>) -> Rational {
    items
        .into_iter()
        .fold(Rational::one(), |acc, x| mul(&acc, x))
}

/// gcd that reduces a word-sized operand first, so a huge integer against a
/// small one costs one linear pass.
fn gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let small = |x: &BigInt| x.magnitude().to_u64();
    match (small(a), small(b)) {
        (Some(x), Some(y)) => BigInt::from(x.gcd(&y)),
        (Some(0), None) => b.abs(),
        (None, Some(0)) => a.abs(),
        (Some(x), None) => BigInt::from(x.gcd(&(b.magnitude() % x).to_u64().unwrap())),
        (None, Some(y)) => BigInt::from(y.gcd(&(a.magnitude() % y).to_u64().unwrap())),
        (None, None) => a.gcd(b),
    }
}

/// Product of reduced rationals by cross-cancellation; the result is reduced
/// without a gcd of the full numerator and denominator.
pub fn mul(a: &Rational, b: &Rational) -> Rational {
    if a.is_zero() || b.is_zero() {
        return Rational::zero();
    }
    let g1 = gcd(a.numer(), b.denom());
    let g2 = gcd(b.numer(), a.denom());
    Rational::new_raw(
        (a.numer() / &g1) * (b.numer() / &g2),
        (a.denom() / &g2) * (b.denom() / &g1),
    )
}

/// Quotient of reduced rationals; see [`mul`].
pub fn div(a: &Rational, b: &Rational) -> Rational {
    assert!(!b.is_zero(), "division by zero");
    let recip = if b.is_negative() {
        Rational::new_raw(-b.denom(), -b.numer())
    } else {
        Rational::new_raw(b.denom().clone(), b.numer().clone())
    };
    mul(a, &recip)
}

pub fn sum<'a>(items: impl IntoIterator<Item = &'a Rational>) -> Rational {
    items.into_iter().fold(Rational::zero(), |acc, x| acc + x)
}

/// Serde adapter: a single rational as `"p/q"`.
pub mod serde_str {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        super::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter: a list of rationals as `["p/q", ...]`.
pub mod serde_vec {
    use super::Rational;
    use serde::{ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&super::format(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| super::parse(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Serde adapter: an optional rational.
pub mod serde_opt {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&super::format(r)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        raw.map(|s| super::parse(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_cancelled_arithmetic_is_reduced() {
        let a = ratio(6, 35);
        let b = ratio(-14, 9);
        assert_eq!(mul(&a, &b), &a * &b);
        assert_eq!(div(&a, &b), &a / &b);
        assert_eq!(div(&b, &a), &b / &a);
        let big = Rational::new(BigInt::from(2).pow(200u32) * 3, BigInt::from(7).pow(90u32));
        let r = mul(&big, &ratio(49, 6));
        assert_eq!(r, &big * ratio(49, 6));
        assert_eq!(r.clone().reduced(), r);
        assert_eq!(mul(&big, &int(0)), int(0));
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(parse("2/6").unwrap(), ratio(1, 3));
        assert_eq!(parse(" 7 ").unwrap(), int(7));
        assert_eq!(parse("-3/4").unwrap(), ratio(-3, 4));
        assert_eq!(format(&int(1)), "1/1");
        assert_eq!(format(&ratio(0, 5)), "0/1");
        assert!(parse("1/0").is_err());
        assert!(parse("x").is_err());
        assert!(parse("0.5").is_err());
    }

    #[test]
    fn huge_rationals_convert() {
        let tiny = Rational::new(BigInt::one(), BigInt::from(3u32).pow(5000u32));
        let expect = -5000.0 * 3f64.ln();
        assert!((ln(&tiny) - expect).abs() < 1e-9);
        assert_eq!(to_f64(&tiny), 0.0);
        assert!((to_f64(&ratio(1, 3)) - 1.0 / 3.0).abs() < 1e-16);
        let big = Rational::new(
            BigInt::from(10u32).pow(40u32) + 1,
            BigInt::from(10u32).pow(39u32),
        );
        assert!((to_f64(&big) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn floor_ceil() {
        assert_eq!(floor_int(&ratio(7, 2)), BigInt::from(3));
        assert_eq!(ceil_int(&ratio(7, 2)), BigInt::from(4));
        assert_eq!(ceil_int(&int(3)), BigInt::from(3));
        assert_eq!(floor_int(&ratio(-7, 2)), BigInt::from(-4));
        assert_eq!(ceil_int(&ratio(-7, 2)), BigInt::from(-3));
    }
}
