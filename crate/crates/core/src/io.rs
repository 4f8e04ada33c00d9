//! CSV ingestion.

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{Dataset, Design, DesignOptions};

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Err(Error::Data { row, col, msg: "missing value".into() });
    }
    let v: f64 = trimmed.parse().map_err(|_| Error::Data {
        row,
        col,
        msg: format!("non-numeric value '{trimmed}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Data { row, col, msg: format!("non-finite value '{trimmed}'") });
    }
    Ok(v)
}

/// Raw table: header names and numeric rows. Row/column numbers in errors
/// are 1-based file coordinates (the header is line 1).
fn read_table<R: std::io::Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Data {
                row: line,
                col: rec.len().min(header.len()) + 1,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| parse_cell(cell, line, j + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals);
    }
    Ok((header, rows))
}

/// Reads a dataset whose first column is named `y` and whose remaining
/// columns are regressors.
pub fn read_dataset<R: std::io::Read>(reader: R, opts: DesignOptions) -> Result<Dataset> {
    let (header, rows) = read_table(reader)?;
    if header.first().map(String::as_str) != Some("y") {
        return Err(Error::Data { row: 1, col: 1, msg: "first column must be named 'y'".into() });
    }
    if header.len() < 2 {
        return Err(Error::Data { row: 1, col: 2, msg: "no regressor columns".into() });
    }
    if rows.is_empty() {
        return Err(Error::Data { row: 2, col: 1, msg: "no data rows".into() });
    }
    let (n, p) = (rows.len(), header.len() - 1);
    let y = Array1::from_iter(rows.iter().map(|r| r[0]));
    let x = Array2::from_shape_fn((n, p), |(i, j)| rows[i][j + 1]);
    let design = Design::with_options(&x, opts, Some(header[1..].to_vec()))?;
    Dataset::new(Arc::new(design), y)
}

pub fn read_dataset_file(path: &Path, opts: DesignOptions) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset(f, opts)
}

/// Reads a coefficient vector: a header line, then one coefficient per row
/// in the last column (an optional leading name column is ignored).
pub fn read_coefficients<R: std::io::Read>(reader: R) -> Result<Array1<f64>> {
    read_coefficients_column(reader, None)
}

/// Like [`read_coefficients`], but takes the column whose header equals
/// `column` when one exists.
pub fn read_coefficients_column<R: std::io::Read>(reader: R, column: Option<&str>) -> Result<Array1<f64>> {
    let (header, rows) = read_table_loose(reader)?;
    let col = column
        .and_then(|name| header.iter().position(|h| h.trim() == name))
        .unwrap_or(header.len().saturating_sub(1));
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| parse_cell(r.get(col).map(String::as_str).unwrap_or(""), i + 2, col + 1))
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}

fn read_table_loose<R: std::io::Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

pub fn read_coefficients_file(path: &Path, column: Option<&str>) -> Result<Array1<f64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_coefficients_column(f, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_named_columns() {
        let text = "y,a,b\n1,2,0\n2,2,1\n3,2,-1\n";
        let data = read_dataset(text.as_bytes(), DesignOptions::default()).unwrap();
        assert_eq!((data.n(), data.p()), (3, 2));
        assert_eq!(data.design().names(), ["a", "b"]);
        assert_eq!(data.design().column_scales()[0], 2.0);
        assert_eq!(data.y()[2], 3.0);
    }

    #[test]
    fn reports_location_of_bad_cells() {
        let err = read_dataset("y,a\n1,2\n3,oops\n".as_bytes(), DesignOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data { row: 3, col: 2, .. }), "{err:?}");
        let err = read_dataset("y,a\n1,\n".as_bytes(), DesignOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data { row: 2, col: 2, .. }), "{err:?}");
        let err = read_dataset("z,a\n1,2\n".as_bytes(), DesignOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data { row: 1, col: 1, .. }));
        let err = read_dataset("y,a\n1,nan\n".as_bytes(), DesignOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data { row: 2, col: 2, .. }));
    }

    #[test]
    fn reads_coefficients_with_or_without_names() {
        let a = read_coefficients("beta\n1.5\n0\n-2\n".as_bytes()).unwrap();
        assert_eq!(a.to_vec(), vec![1.5, 0.0, -2.0]);
        let b = read_coefficients("name,beta\nx1,1\nx2,2\n".as_bytes()).unwrap();
        assert_eq!(b.to_vec(), vec![1.0, 2.0]);
        let c = read_coefficients_column("name,raw,normalized\nx1,1,3\nx2,2,4\n".as_bytes(), Some("raw")).unwrap();
        assert_eq!(c.to_vec(), vec![1.0, 2.0]);
        let d = read_coefficients_column("name,beta\nx1,1\n".as_bytes(), Some("raw")).unwrap();
        assert_eq!(d.to_vec(), vec![1.0]);
    }
}
