//! CSV and JSON writers. Floats carry 12 significant digits.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use osud_core::report::{fmt12, BoundKind, RatioReport};
use serde::Serialize;
use serde_json::Value;

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// CSV text from a header and rows of cells.
pub fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn round_numbers(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            serde_json::Number::from_f64(fmt12(x).parse().expect("fmt12 output parses")).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_numbers).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_numbers(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with every float rounded to 12 significant digits.
pub fn json_text<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let v = round_numbers(serde_json::to_value(value)?);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_default()
}

pub const RATIO_HEADER: [&str; 15] = [
    "algorithm",
    "n",
    "p",
    "zeta",
    "q",
    "alg_value",
    "opt_value",
    "ratio",
    "bound",
    "bound_kind",
    "alg_mc_mean",
    "alg_mc_se",
    "opt_mc_mean",
    "opt_mc_se",
    "passes",
];

pub fn ratio_csv(r: &RatioReport, passes: bool) -> anyhow::Result<String> {
    let row = vec![
        r.algorithm.clone(),
        r.n.to_string(),
        fmt12(r.p),
        fmt12(r.zeta),
        opt(r.q),
        fmt12(r.alg_value),
        fmt12(r.opt_value),
        fmt12(r.ratio),
        fmt12(r.bound),
        match r.bound_kind {
            BoundKind::Lower => "lower".into(),
            BoundKind::Upper => "upper".into(),
        },
        opt(r.alg_mc.map(|e| e.mean)),
        opt(r.alg_mc.map(|e| e.std_error)),
        opt(r.opt_mc.map(|e| e.mean)),
        opt(r.opt_mc.map(|e| e.std_error)),
        passes.to_string(),
    ];
    csv_text(&RATIO_HEADER, [row])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_floats_are_rounded() {
        let text = json_text(&serde_json::json!({"x": 0.745_440_332_114_123_4, "k": 3, "v": [1.0 / 3.0]})).unwrap();
        assert!(text.contains("0.745440332114"));
        assert!(!text.contains("0.7454403321141"));
        assert!(text.contains("0.333333333333"));
        assert!(text.contains("\"k\": 3"));
    }

    #[test]
    fn csv_has_header() {
        let t = csv_text(&["a", "b"], [vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(t, "a,b\n1,2\n");
    }
}
