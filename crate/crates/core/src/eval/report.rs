//! Stable JSON reports: keys sorted, non-integer numbers rounded to six
//! significant digits, two-space indentation, trailing newline.

use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::Result;

/// Rounds to six significant digits via decimal formatting.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn normalise(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            Number::from_f64(round_sig6(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(normalise).collect()),
        // serde_json's default map is ordered by key
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, normalise(v))).collect()),
        other => other,
    }
}

pub fn to_report_json<S: Serialize>(value: &S) -> Result<String> {
    let value = normalise(serde_json::to_value(value)?);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}
