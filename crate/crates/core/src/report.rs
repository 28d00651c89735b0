//! Serialization helpers shared by the command-line reports.

use std::fmt::Display;

use serde::ser::{SerializeSeq, Serializer};
use serde_json::Value;

use crate::gf2::AffineSubspace;

pub(crate) fn ser_display<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

pub(crate) fn ser_members<S: Serializer>(members: &[(AffineSubspace, f64)], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(members.len()))?;
    for (w, p) in members {
        seq.serialize_element(&serde_json::json!({ "subspace": w.to_string(), "probability": p }))?;
    }
    seq.end()
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: serde::Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("report values serialize");
    out.push('\n');
    out
}

/// Flattens a JSON value into `path,value` rows, paths joined with `.`.
pub fn to_flat_csv(value: &Value) -> String {
    let mut rows = Vec::new();
    flatten("", value, &mut rows);
    let mut out = String::from("path,value\n");
    for (path, v) in rows {
        out.push_str(&csv_field(&path));
        out.push(',');
        out.push_str(&csv_field(&v));
        out.push('\n');
    }
    out
}

fn flatten(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, rows);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, rows);
            }
        }
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        Value::Null => rows.push((prefix.to_string(), String::new())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattening() {
        let v = serde_json::json!({"a": {"b": [1, "x,y"]}, "c": null, "d": true});
        assert_eq!(to_flat_csv(&v), "path,value\na.b.0,1\na.b.1,\"x,y\"\nc,\nd,true\n");
    }
}
