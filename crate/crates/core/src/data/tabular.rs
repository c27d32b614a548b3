//! Flat-vector CSV with header `label,f0,f1,...`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::DataError;
use crate::linalg::Matrix;

pub fn parse_csv(text: &str) -> Result<(Matrix, Vec<usize>), DataError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| DataError::Csv {
        line: 1,
        msg: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"label") {
        return Err(DataError::Csv {
            line: 1,
            msg: "header must start with `label`".into(),
        });
    }
    let d = cols.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let err = |msg: String| DataError::Csv { line: i + 1, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(err(format!("{} fields, header has {}", fields.len(), d + 1)));
        }
        labels.push(
            fields[0]
                .parse::<usize>()
                .map_err(|e| err(format!("label: {e}")))?,
        );
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|e| err(format!("{f:?}: {e}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite feature {f}")));
            }
            data.push(v);
        }
    }
    Ok((Matrix::new(labels.len(), d, data)?, labels))
}

/// Full-precision rendering; [`parse_csv`] recovers every value exactly.
pub fn format_csv(x: &Matrix, labels: &[usize]) -> String {
    let mut out = String::from("label");
    for j in 0..x.cols() {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for (row, y) in x.iter_rows().zip(labels) {
        let _ = write!(out, "{y}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn load_csv(path: &Path) -> Result<(Matrix, Vec<usize>), DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_csv(&text)
}

pub fn write_csv(path: &Path, x: &Matrix, labels: &[usize]) -> Result<(), DataError> {
    fs::write(path, format_csv(x, labels)).map_err(|e| DataError::io(path, e))
}
