//! Serde helpers that write floats with exactly six decimals.

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

struct F6(f64);

impl Serialize for F6 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let text = if self.0.is_finite() {
            // avoid "-0.000000"
            let v = if self.0.abs() < 5e-7 { 0.0 } else { self.0 };
            format!("{v:.6}")
        } else {
            "null".to_string()
        };
        RawValue::from_string(text).map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

pub(crate) fn f6<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    F6(*v).serialize(s)
}

pub(crate) fn f6_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => F6(*x).serialize(s),
        None => s.serialize_none(),
    }
}

pub(crate) fn f6_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&F6(*x))?;
    }
    seq.end()
}

pub(crate) fn f6_vec2<S: Serializer, R: AsRef<[f64]>>(v: &[R], s: S) -> Result<S::Ok, S::Error> {
    struct Row<'a>(&'a [f64]);
    impl Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            f6_vec(self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for row in v {
        seq.serialize_element(&Row(row.as_ref()))?;
    }
    seq.end()
}

/// Fixed six-decimal text, with negative zero folded to zero.
pub fn fmt6(v: f64) -> String {
    let v = if v.abs() < 5e-7 { 0.0 } else { v };
    format!("{v:.6}")
}
