use std::fmt::Write as _;
use std::path::Path;

use crate::error::{GplmError, Result};
use crate::geometry::Configuration;

/// Parses the plain-text landmark format: a `k m` header line followed by
/// `k` lines of `m` whitespace-separated decimals. Blank lines and lines
/// starting with `#` are ignored.
pub fn parse_landmarks(text: &str, path: &Path) -> Result<Configuration> {
    let parse_err = |message: String| GplmError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err("missing `k m` header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(format!("line {hline}: bad header '{header}': {e}")))?;
    let [k, m] = dims[..] else {
        return Err(parse_err(format!(
            "line {hline}: header must hold exactly `k m`, got '{header}'"
        )));
    };
    let mut values = Vec::with_capacity(k * m);
    let mut rows = 0;
    for (lineno, line) in lines {
        rows += 1;
        if rows > k {
            return Err(parse_err(format!("line {lineno}: more than k={k} landmark rows")));
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("line {lineno}: {e}")))?;
        if row.len() != m {
            return Err(parse_err(format!(
                "line {lineno}: expected {m} coordinates, found {}",
                row.len()
            )));
        }
        values.extend(row);
    }
    if rows != k {
        return Err(parse_err(format!("expected {k} landmark rows, found {rows}")));
    }
    Configuration::from_rows(k, m, &values).map_err(|e| parse_err(e.to_string()))
}

pub fn read_landmarks(path: &Path) -> Result<Configuration> {
    let text = std::fs::read_to_string(path).map_err(|e| GplmError::io(path, e))?;
    parse_landmarks(&text, path)
}

/// Formats a configuration with shortest round-trip decimals, so that reading
/// the file back reproduces the coordinates bit for bit.
pub fn format_landmarks(x: &Configuration) -> String {
    let (k, m) = (x.landmarks(), x.ambient_dim());
    let mut out = format!("{k} {m}\n");
    for i in 0..k {
        let row: Vec<String> = (0..m).map(|j| format!("{:?}", x.coords()[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn write_landmarks(path: &Path, x: &Configuration) -> Result<()> {
    std::fs::write(path, format_landmarks(x)).map_err(|e| GplmError::io(path, e))
}
