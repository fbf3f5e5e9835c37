//! Serde helpers for extended reals: finite values as JSON numbers, infinities
//! as the strings `"-inf"` and `"inf"`.

use serde::{Deserialize, Deserializer, Serializer};

#[derive(Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if *x == f64::NEG_INFINITY {
        s.serialize_str("-inf")
    } else if *x == f64::INFINITY {
        s.serialize_str("inf")
    } else {
        s.serialize_str("nan")
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match Repr::deserialize(d)? {
        Repr::Num(x) => Ok(x),
        Repr::Text(t) => match t.as_str() {
            "-inf" => Ok(f64::NEG_INFINITY),
            "inf" => Ok(f64::INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(serde::de::Error::custom(format!("not an extended real: {other}"))),
        },
    }
}

/// Text form used in CSV output.
pub fn format(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else {
        "nan".into()
    }
}
