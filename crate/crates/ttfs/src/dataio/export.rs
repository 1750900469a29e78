//! Plot-ready CSV and JSON export. Every file embeds the resolved
//! configuration as `# key = value` comment lines (CSV) or a `config`
//! field (JSON), and floats are written with shortest round-trip
//! formatting, so repeated runs with the same seed produce byte-identical
//! artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Shortest decimal representation that parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Write a CSV file with leading comment lines, a header row, then rows.
pub fn write_csv(
    path: &Path,
    comments: &[(String, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = Vec::new();
    for (k, v) in comments {
        writeln!(out, "# {k} = {v}")?;
    }
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a JSON value with a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(
            &path,
            &[("seed".into(), "7".into())],
            &["a", "b"],
            &[vec!["1".into(), fmt_f64(0.1 + 0.2)]],
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# seed = 7\na,b\n1,0.30000000000000004\n");
    }

    #[test]
    fn f64_formatting_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 2e-12, -17.25, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
