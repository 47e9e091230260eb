//! Numeric column files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;

/// Reads a headed CSV of numeric columns. Errors name the file and line.
pub fn read_columns(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open input {}: {e}", path.display())))?;
    parse_columns(file, &path.display().to_string())
}

pub fn parse_columns<R: std::io::Read>(input: R, name: &str) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{name}: line 1: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(CliError::Data(format!("{name}: line 1: empty column name")));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("{name}: line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::Data(format!("{name}: line {line}: `{field}` in column `{}` is not a number", header[i])))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{name}: line {line}: non-finite value in column `{}`", header[i])));
            }
            cols[i].push(v);
        }
    }
    Ok(header.into_iter().zip(cols).collect())
}
