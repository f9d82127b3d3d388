//! JSON encoding for thresholds that may be infinite.
//!
//! Finite values are plain numbers; `±∞` are the strings `"inf"` / `"-inf"`.

use serde::de::{self, Deserializer, Visitor};
use serde::Serializer;

pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if value.is_finite() {
        serializer.serialize_f64(*value)
    } else if *value > 0.0 {
        serializer.serialize_str("inf")
    } else if *value < 0.0 {
        serializer.serialize_str("-inf")
    } else {
        serializer.serialize_str("nan")
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
    struct ThresholdVisitor;

    impl Visitor<'_> for ThresholdVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number, \"inf\" or \"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            parse_threshold(v).ok_or_else(|| E::custom(format!("invalid threshold {v:?}")))
        }
    }

    deserializer.deserialize_any(ThresholdVisitor)
}

/// Parses a threshold from text, accepting `inf`, `+inf`, `-inf` and `infinity`.
pub fn parse_threshold(s: &str) -> Option<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        other => other.parse().ok().filter(|v: &f64| !v.is_nan()),
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "super")]
        tau: f64,
    }

    #[test]
    fn infinities_survive_json() {
        for tau in [f64::INFINITY, f64::NEG_INFINITY, -0.31, 2.0] {
            let json = serde_json::to_string(&Holder { tau }).unwrap();
            assert_eq!(serde_json::from_str::<Holder>(&json).unwrap().tau, tau);
        }
        assert_eq!(serde_json::to_string(&Holder { tau: f64::INFINITY }).unwrap(), r#"{"tau":"inf"}"#);
        assert!(serde_json::from_str::<Holder>(r#"{"tau":"abc"}"#).is_err());
    }
}
