//! Extended nonnegative reals.
//!
//! Divergences and some capacities are legitimately infinite. Infinity is a
//! separate variant so it never leaks into floating point arithmetic; it is
//! serialized as the string `"inf"`.

use serde::de::{self, Deserializer, Visitor};
use serde::{Serialize, Serializer};
use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ExtReal::Infinite)
    }

    /// The finite value, if any.
    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    pub fn le_value(&self, bound: f64) -> bool {
        match *self {
            ExtReal::Finite(v) => v <= bound,
            ExtReal::Infinite => false,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn add(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::Infinite) => Some(Ordering::Less),
            (ExtReal::Infinite, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::Infinite, ExtReal::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::Finite(v)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

/// Decimal rendering with 6 significant digits; infinities print as "inf".
pub fn format_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => serializer.serialize_f64(*v),
            ExtReal::Infinite => serializer.serialize_str("inf"),
        }
    }
}

struct ExtRealVisitor;

impl<'de> Visitor<'de> for ExtRealVisitor {
    type Value = ExtReal;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or the string \"inf\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal, E> {
        Ok(ExtReal::Finite(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal, E> {
        Ok(ExtReal::Finite(v as f64))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal, E> {
        Ok(ExtReal::Finite(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal, E> {
        match v {
            "inf" => Ok(ExtReal::Infinite),
            other => other
                .parse::<f64>()
                .map(ExtReal::Finite)
                .map_err(|_| E::custom(format!("not an extended real: {other}"))),
        }
    }

    fn visit_map<A: de::MapAccess<'de>>(self, map: A) -> Result<ExtReal, A::Error> {
        // arbitrary-precision numbers arrive as a single-entry map
        let value: serde_json::Value =
            de::Deserialize::deserialize(de::value::MapAccessDeserializer::new(map))?;
        match value.as_f64() {
            Some(v) => Ok(ExtReal::Finite(v)),
            None => Err(de::Error::custom("not an extended real")),
        }
    }
}

impl<'de> de::Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(ExtRealVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig(0.278071234), "0.278071");
        assert_eq!(format_sig(1234567.0), "1234570");
        assert_eq!(format_sig(f64::INFINITY), "inf");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(2.5e-7), "0.00000025");
    }

    #[test]
    fn ordering_puts_infinity_last() {
        assert!(ExtReal::Finite(1e300) < ExtReal::Infinite);
        assert_eq!(ExtReal::Infinite.min(ExtReal::Finite(2.0)), ExtReal::Finite(2.0));
        assert_eq!(ExtReal::Finite(2.0).max(ExtReal::Infinite), ExtReal::Infinite);
    }

    #[test]
    fn json_round_trip() {
        let values = vec![ExtReal::Finite(0.25), ExtReal::Infinite];
        let text = serde_json::to_string(&values).unwrap();
        assert_eq!(text, "[0.25,\"inf\"]");
        let back: Vec<ExtReal> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, values);
    }
}
