use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::CliError;

/// Formats `v` with at most 9 significant digits, switching to exponent
/// notation outside `[1e-5, 1e9)`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn create_output(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let f = File::create(path)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<Box<dyn Write>>, CliError> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create_output(path)?))
}

pub fn write_err(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("write failed: {e}"))
}

/// A numeric CSV table with a mandatory header row.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("bad header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.iter().all(String::is_empty) {
        return Err(CliError::Data("missing header row".into()));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row_no = k + 1;
        let rec = rec.map_err(|e| CliError::Data(format!("row {row_no}: {e}")))?;
        let mut row = Vec::with_capacity(headers.len());
        for (field, name) in rec.iter().zip(&headers) {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Data(format!(
                    "row {row_no}, column `{name}`: `{field}` is not a number"
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "row {row_no}, column `{name}`: non-finite value"
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    Ok(Table { headers, rows })
}

/// Indices of the columns `{prefix}1, {prefix}2, ...` in order. Stops at
/// the first missing index; a later stray index is a schema error.
pub fn numbered_columns(t: &Table, prefix: &str) -> Result<Vec<usize>, CliError> {
    let mut idx = Vec::new();
    while let Some(c) = t.column(&format!("{prefix}{}", idx.len() + 1)) {
        idx.push(c);
    }
    let stray = t.headers.iter().find(|h| {
        h.strip_prefix(prefix)
            .and_then(|n| n.parse::<usize>().ok())
            .is_some_and(|n| n == 0 || n > idx.len())
    });
    if let Some(h) = stray {
        return Err(CliError::Data(format!(
            "column `{h}` breaks the {prefix}1..{prefix}{} sequence",
            idx.len()
        )));
    }
    Ok(idx)
}
