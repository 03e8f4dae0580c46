//! Report rendering: pretty JSON or a two-column aligned table.

use serde_json::Value;

pub fn json(report: &Value) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("reports are plain JSON");
    text.push('\n');
    text
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&key(k), child, rows);
            }
        }
        Value::Array(items) if items.iter().any(|i| i.is_object()) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), child, rows);
            }
        }
        Value::Array(_) => rows.push((prefix.to_string(), v.to_string())),
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        _ if is_scalar(v) => rows.push((prefix.to_string(), v.to_string())),
        _ => unreachable!(),
    }
}

/// `key  value` lines, keys padded to a common width. The scenario echo is
/// left out; it is in the JSON form.
pub fn table(report: &Value) -> String {
    let mut rows = Vec::new();
    if let Value::Object(map) = report {
        for (k, v) in map {
            if k != "scenario" {
                flatten(k, v, &mut rows);
            }
        }
    }
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let pad = width - k.chars().count();
        out.push_str(&k);
        out.push_str(&" ".repeat(pad + 2));
        out.push_str(&v);
        out.push('\n');
    }
    out
}
