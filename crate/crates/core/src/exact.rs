//! Exact rational helpers and the serialization conventions for reports.

use num::bigint::BigInt;
use num::{One, Signed, ToPrimitive, Zero};
use serde::Serializer;

use crate::error::{invalid, Result};

pub type Rational = num::BigRational;

pub fn ratio(num: u64, den: u64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn zero() -> Rational {
    Rational::zero()
}

/// `2^-k` as an exact rational.
pub fn pow2_neg(k: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << k as usize)
}

pub fn to_f64(r: &Rational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() && (v != 0.0 || r.is_zero()) {
            return v;
        }
    }
    let l = log2(r);
    if r.is_negative() {
        -(2f64.powf(l))
    } else {
        2f64.powf(l)
    }
}

fn log2_bigint(v: &BigInt) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        v.to_f64().unwrap().abs().log2()
    } else {
        let shift = bits - 60;
        let top: BigInt = v.abs() >> shift as usize;
        top.to_f64().unwrap().log2() + shift as f64
    }
}

/// log2 of |r|; `-inf` for zero.
pub fn log2(r: &Rational) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    log2_bigint(r.numer()) - log2_bigint(r.denom())
}

/// Always `p/q`, also for integers, so consumers see one shape.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Accepts `p/q`, an integer, or a finite decimal such as `0.125`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().or_else(|_| invalid(format!("bad rational `{s}`")))?;
        let q: BigInt = q.trim().parse().or_else(|_| invalid(format!("bad rational `{s}`")))?;
        if q.is_zero() {
            return invalid(format!("zero denominator in `{s}`"));
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let digits = format!("{whole}{frac}");
        let p: BigInt = digits.parse().or_else(|_| invalid(format!("bad decimal `{s}`")))?;
        let q = num::pow(BigInt::from(10), frac.len());
        return Ok(Rational::new(p, q));
    }
    let p: BigInt = s.parse().or_else(|_| invalid(format!("bad number `{s}`")))?;
    Ok(Rational::from_integer(p))
}

/// Round to 12 significant digits so that reports are byte-stable.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.11e}", x).parse().unwrap_or(x)
}

pub fn ser_rational<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

pub fn ser_opt_rational<S: Serializer>(
    r: &Option<Rational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&format_rational(r)),
        None => s.serialize_none(),
    }
}

pub fn ser_real<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_nan() {
        s.serialize_str("nan")
    } else if x.is_infinite() {
        s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(round12(*x))
    }
}

pub fn ser_opt_real<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(x) => ser_real(x, s),
        None => s.serialize_none(),
    }
}

pub fn ser_reals<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        if x.is_finite() {
            seq.serialize_element(&round12(*x))?;
        } else {
            seq.serialize_element(&format!("{x}"))?;
        }
    }
    seq.end()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_and_parse_roundtrip() {
        assert_eq!(format_rational(&ratio(1, 4)), "1/4");
        assert_eq!(format_rational(&one()), "1/1");
        assert_eq!(parse_rational("2/8").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("0.125").unwrap(), ratio(1, 8));
        assert_eq!(parse_rational("3").unwrap(), int(3));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn log2_handles_huge_values() {
        assert_eq!(log2(&ratio(1, 8)), -3.0);
        let tiny = pow2_neg(3000);
        assert!((log2(&tiny) + 3000.0).abs() < 1e-9);
        assert_eq!(to_f64(&ratio(3, 4)), 0.75);
    }

    #[test]
    fn round12_keeps_twelve_digits() {
        assert_eq!(round12(0.1234567890123456), 0.123456789012);
        assert_eq!(round12(2.0), 2.0);
    }
}
