use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Bindings, Columns};

/// Tabular data: named input columns and a target.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset {
    pub names: Vec<String>,
    /// One vector per variable, each of length `n_rows`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub target: String,
    /// Free-form note on where the data came from.
    pub note: String,
}

impl Dataset {
    pub fn new(names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if names.len() != x.len() {
            return Err(Error::LengthMismatch { expected: names.len(), got: x.len() });
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate column name `{name}`")));
            }
        }
        for (name, col) in names.iter().zip(&x) {
            if col.len() != y.len() {
                return Err(Error::ColumnLength { name: name.clone(), got: col.len(), expected: y.len() });
            }
        }
        Ok(Self { names, x, y, target: "y".into(), note: String::new() })
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn with_target(mut self, target: impl Into<String>) -> Self {
        self.target = target.into();
        self
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.x[i].as_slice())
    }

    pub fn bindings(&self) -> Columns<'_> {
        let mut c = Columns::new(self.n_rows());
        for (n, col) in self.names.iter().zip(&self.x) {
            c.push(n, col);
        }
        c
    }

    /// The rows at `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            x: self.x.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            target: self.target.clone(),
            note: self.note.clone(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv_to(f)
    }

    pub fn write_csv_to(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(&self.target);
        wtr.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut rec: Vec<String> = self.x.iter().map(|c| c[r].to_string()).collect();
            rec.push(self.y[r].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl Bindings for Dataset {
    fn column(&self, name: &str) -> Option<&[f64]> {
        Dataset::column(self, name)
    }

    fn rows(&self) -> usize {
        self.n_rows()
    }
}

/// Reads a CSV with a header row; the last column is the target.
pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_csv(f).map(|d| d.with_note(format!("csv:{}", path.display())))
}

pub fn read_csv(r: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header.iter().any(|h| h.is_empty()) {
        return Err(Error::Csv("a header row with at least two named columns is required".into()));
    }
    let numeric = |h: &str| h.parse::<f64>().is_ok();
    if header.iter().all(|h| numeric(h)) {
        return Err(Error::Csv("missing header row".into()));
    }
    let m = header.len() - 1;
    let mut x = vec![Vec::new(); m];
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Csv(format!("row {row}: expected {} cells, found {}", header.len(), rec.len())));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Csv(format!("row {row}, column `{}`: non-numeric cell `{cell}`", header[c])))?;
            if c < m {
                x[c].push(v);
            } else {
                y.push(v);
            }
        }
    }
    let target = header[m].clone();
    Dataset::new(header[..m].to_vec(), x, y).map(|d| d.with_target(target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_columns() {
        let d = read_csv("x,y\n1,2\n".as_bytes()).unwrap();
        assert_eq!((d.n_vars(), d.n_rows()), (1, 1));
        assert_eq!(d.y, vec![2.0]);
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(read_csv("x,x,y\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let err = read_csv("x,y\n1,2\n3,abc\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(read_csv("1,2\n3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn roundtrip_is_exact() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.1234567891).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v * v + v * v + v).collect();
        let d = Dataset::new(vec!["x1".into()], vec![x], y).unwrap();
        let mut buf = Vec::new();
        d.write_csv_to(&mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.x, d.x);
        assert_eq!(back.y, d.y);
    }
}
