//! Exact fractions used for every quantity in the engine.
//!
//! [`Rational`] is an arbitrary-precision fraction kept in canonical reduced
//! form (positive denominator, coprime parts). This module adds the handful
//! of helpers the mechanisms need on top of it: parsing the `"p/q"` text
//! form, floor/ceil to integers and a serde representation that writes
//! integers as JSON numbers and everything else as strings.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = num_rational::BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn frac(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// Parses `"p/q"`, `"p"` or `"-p/q"`. Whitespace around the parts is allowed.
pub fn parse(text: &str) -> Result<Rational, String> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: BigInt = num
        .parse()
        .map_err(|_| format!("invalid rational numerator in {text:?}"))?;
    let den: BigInt = den
        .parse()
        .map_err(|_| format!("invalid rational denominator in {text:?}"))?;
    if den.is_zero() {
        return Err(format!("zero denominator in {text:?}"));
    }
    Ok(Rational::new(num, den))
}

/// Canonical text form: `"p"` for integers, `"p/q"` otherwise.
pub fn to_text(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn floor_int(value: &Rational) -> BigInt {
    value.numer().div_floor(value.denom())
}

pub fn ceil_int(value: &Rational) -> BigInt {
    value.numer().div_ceil(value.denom())
}

pub fn floor(value: &Rational) -> Rational {
    Rational::from_integer(floor_int(value))
}

pub fn ceil(value: &Rational) -> Rational {
    Rational::from_integer(ceil_int(value))
}

/// Integer value if `value` is integral and fits in an `i64`.
pub fn as_i64(value: &Rational) -> Option<i64> {
    if value.is_integer() {
        value.numer().to_i64()
    } else {
        None
    }
}

pub fn abs(value: &Rational) -> Rational {
    value.abs()
}

pub fn sum<'a, I: IntoIterator<Item = &'a Rational>>(values: I) -> Rational {
    values.into_iter().fold(Rational::zero(), |acc, v| acc + v)
}

/// Serde adapter: integral values become JSON integers, the rest `"p/q"` strings.
/// Input accepts integers or strings.
pub mod serde_text {
    use super::{as_i64, parse, to_text, Rational};
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &Rational, serializer: S) -> Result<S::Ok, S::Error> {
        match as_i64(value) {
            Some(v) => serializer.serialize_i64(v),
            None => serializer.serialize_str(&to_text(value)),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Rational, D::Error> {
        deserializer.deserialize_any(RationalVisitor)
    }

    struct RationalVisitor;

    impl<'de> Visitor<'de> for RationalVisitor {
        type Value = Rational;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an integer or a \"p/q\" string")
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
            Ok(super::int(v))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
            Ok(Rational::from_integer(v.into()))
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
            Err(E::custom(format!(
                "floating-point number {v} is not accepted; write it as a \"p/q\" string"
            )))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
            parse(v).map_err(E::custom)
        }
    }
}

/// Same as [`serde_text`] for `Vec<Rational>`.
pub mod serde_text_vec {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::serde_text")] Rational);

    pub fn serialize<S: Serializer>(values: &[Rational], serializer: S) -> Result<S::Ok, S::Error> {
        let wrapped: Vec<Wrap> = values.iter().cloned().map(Wrap).collect();
        wrapped.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<Rational>, D::Error> {
        let wrapped = Vec::<Wrap>::deserialize(deserializer)?;
        Ok(wrapped.into_iter().map(|w| w.0).collect())
    }
}
