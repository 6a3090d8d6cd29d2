//! CSV tables with named numeric columns.

use std::path::Path;

use csv::StringRecord;
use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// A CSV file read into memory. Cells are parsed on demand so that
/// columns the run does not use may hold text.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    records: Vec<StringRecord>,
    /// SHA-256 of the file bytes.
    pub sha256: String,
    path: String,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Table> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        let mut reader =
            csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
        let bad = |e: csv::Error| CliError::data(format!("{}: {e}", path.display()));
        let headers = reader.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let records = reader.records().collect::<Result<Vec<_>, _>>().map_err(bad)?;
        Ok(Table { headers, records, sha256, path: path.display().to_string() })
    }

    pub fn rows(&self) -> usize {
        self.records.len()
    }

    /// Values of one column; missing or non-numeric cells are errors.
    pub fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::data(format!("{}: no column named '{name}'", self.path))
        })?;
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(j).unwrap_or("");
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(CliError::data(format!(
                        "{}: row {}, column '{name}': '{cell}' is not a finite number",
                        self.path,
                        i + 2
                    ))),
                }
            })
            .collect()
    }

    /// Matrix whose columns are the named columns, in order.
    pub fn matrix(&self, names: &[String]) -> CliResult<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.rows(), names.len());
        for (j, name) in names.iter().enumerate() {
            m.set_column(j, &DVector::from_vec(self.column(name)?));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_numeric_columns_and_rejects_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "id,x,y\na, 1.5,2\nb,2,NA\n").unwrap();
        let t = Table::read(&path).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.column("x").unwrap(), vec![1.5, 2.0]);
        assert_eq!(t.column("y").unwrap_err().code, crate::error::EXIT_DATA);
        assert!(t.column("z").unwrap_err().message.contains("no column"));
        assert_eq!(t.sha256.len(), 64);
    }
}
