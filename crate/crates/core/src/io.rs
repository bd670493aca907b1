//! CSV and file helpers shared by the dataset, cycle, target and log formats.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Shortest representation that round-trips to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Reads a numeric CSV whose header must equal `header` exactly.
/// Line numbers in errors are 1-based and count the header line.
pub fn read_csv_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_rows(&text, path, header)
}

pub fn parse_csv_rows(text: &str, path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let got = rdr
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    if got.is_empty() || (got.len() == 1 && got[0].is_empty()) {
        return Err(perr(1, "missing header".into()));
    }
    if got != header {
        return Err(perr(
            1,
            format!("expected header `{}`, found `{}`", header.join(","), got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(perr(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(header.len());
        for (field, name) in rec.iter().zip(header) {
            let v: f64 = field
                .parse()
                .map_err(|_| perr(line, format!("column `{name}`: cannot parse `{field}` as a number")))?;
            if !v.is_finite() {
                return Err(perr(line, format!("column `{name}`: non-finite value")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv_atomic(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, csv_string(header, rows).as_bytes())
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn tmp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_mismatch_reports_line_one() {
        let err = parse_csv_rows("a,c\n1,2\n", Path::new("x.csv"), &["a", "b"]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn bad_number_names_line() {
        let err = parse_csv_rows("a,b\n1,2\n3,oops\n", Path::new("x.csv"), &["a", "b"]).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("oops"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn empty_input_is_error() {
        assert!(parse_csv_rows("", Path::new("x.csv"), &["a"]).is_err());
    }

    #[test]
    fn atomic_write_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv_atomic(&p, &["a", "b"], &[vec![fmt_f64(0.1), fmt_f64(-2.5)]]).unwrap();
        let rows = read_csv_rows(&p, &["a", "b"]).unwrap();
        assert_eq!(rows, vec![vec![0.1, -2.5]]);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
