//! Small file helpers shared by every on-disk artifact.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the one written.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Version stamped into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Checks the `schema_version` a JSON artifact was written with.
pub fn check_schema(path: &Path, found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::data(format!(
            "{}: schema version {found}, expected {SCHEMA_VERSION}",
            path.display()
        )));
    }
    Ok(())
}

/// A labelled numeric table: one header row, then rows whose first cell is a
/// label and whose remaining cells are numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn write_table<'a>(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = (String, &'a [f64])>,
) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let mut cells = Vec::new();
    for (label, values) in rows {
        cells.clear();
        cells.push(label);
        cells.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&cells)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<Table> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut cells = rec.iter();
        labels.push(cells.next().unwrap_or_default().to_owned());
        let row = cells
            .enumerate()
            .map(|(j, c)| {
                c.parse::<f64>().map_err(|_| {
                    Error::data(format!(
                        "{}: row {} column {}: '{c}' is not a number",
                        path.display(),
                        i + 2,
                        j + 2
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, labels, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/t.csv");
        let values = [0.1 + 0.2, -1e-300, 123456.789, 1.0 / 3.0];
        let header = vec!["k".to_string(), "a".into(), "b".into()];
        write_table(&path, &header, [("r0".to_string(), &values[..2]), ("r1".into(), &values[2..])]).unwrap();
        let t = read_table(&path).unwrap();
        assert_eq!(t.header, header);
        assert_eq!(t.labels, ["r0", "r1"]);
        assert_eq!(t.rows, vec![values[..2].to_vec(), values[2..].to_vec()]);
    }

    #[test]
    fn bad_cell_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "k,a\nr,xyz\n").unwrap();
        let err = read_table(&path).unwrap_err().to_string();
        assert!(err.contains("xyz") && err.contains("row 2"), "{err}");
    }

    #[test]
    fn missing_file() {
        assert!(matches!(read_table(Path::new("/nonexistent/x.csv")), Err(Error::Missing(_))));
    }
}
