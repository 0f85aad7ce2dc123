//! Artifact writing: atomic file replacement and report rounding.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Writes `contents` to a temporary file beside `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::from(e.error))?;
    Ok(())
}

/// Rounds to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Compact 6-significant-digit text for tables.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r = sig6(x);
    let a = r.abs();
    if a != 0.0 && !(1e-4..1e6).contains(&a) {
        format!("{r:e}")
    } else {
        r.to_string()
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(sig6).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(m) => m.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON of a report with every float rounded to 6 significant digits.
pub fn report_json<S: Serialize>(report: &S) -> Result<String, CliError> {
    let mut v = serde_json::to_value(report)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report<S: Serialize>(path: &Path, report: &S) -> Result<(), CliError> {
    write_atomic(path, report_json(report)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_six_digits() {
        assert_eq!(sig6(1.23456789), 1.23457);
        assert_eq!(sig6(-0.000123456789), -0.000123457);
        assert_eq!(sig6(987654321.0), 987654000.0);
        assert_eq!(fmt6(0.5), "0.5");
        assert_eq!(fmt6(1.0e-7), "1e-7");
    }

    #[test]
    fn report_rounding_keeps_integers() {
        let s = report_json(&serde_json::json!({"a": 1.23456789, "n": 54, "v": [2.0000004]})).unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"], 1.23457);
        assert_eq!(v["n"], 54);
        assert_eq!(v["v"][0], 2.0);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
