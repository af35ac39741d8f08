//! CSV time series of diagnostics records.
//!
//! Columns follow [`DiagnosticsRecord::COLUMNS`]. Values are written in
//! shortest round-trip exponent form, so parsing a row gives back the exact
//! doubles.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter};
use std::path::Path;

use npe_core::DiagnosticsRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("malformed series file: {0}")]
    Csv(#[from] csv::Error),

    #[error("series header does not match the expected columns")]
    BadHeader,

    #[error("line {line}: cannot parse `{value}` in column {column}")]
    BadValue {
        line: u64,
        column: &'static str,
        value: String,
    },
}

fn format_value(v: f64) -> String {
    format!("{v:e}")
}

/// Appends rows to a series file, writing the header first if the file is
/// empty.
pub struct SeriesWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl SeriesWriter {
    /// Truncates `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self, SeriesError> {
        let file = File::create(path)?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(DiagnosticsRecord::COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn append(path: &Path) -> Result<Self, SeriesError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let empty = file.metadata()?.len() == 0;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        if empty {
            inner.write_record(DiagnosticsRecord::COLUMNS)?;
        }
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> Result<(), SeriesError> {
        self.inner.write_record(record.to_row().iter().map(|v| format_value(*v)))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), SeriesError> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Opens, appends one row and closes.
pub fn append_series_row(record: &DiagnosticsRecord, path: &Path) -> Result<(), SeriesError> {
    let mut w = SeriesWriter::append(path)?;
    w.write(record)?;
    w.flush()
}

pub fn read_series(path: &Path) -> Result<Vec<DiagnosticsRecord>, SeriesError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?;
    if !header.iter().eq(DiagnosticsRecord::COLUMNS.iter().copied()) {
        return Err(SeriesError::BadHeader);
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let values = row
            .iter()
            .zip(DiagnosticsRecord::COLUMNS)
            .map(|(s, column)| {
                s.parse::<f64>().map_err(|_| SeriesError::BadValue {
                    line,
                    column,
                    value: s.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(DiagnosticsRecord::from_row(&values).map_err(|_| SeriesError::BadHeader)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64) -> DiagnosticsRecord {
        let mut row = [0.0; 28];
        for (i, v) in row.iter_mut().enumerate() {
            *v = (t + 1.0) * (i as f64 + 0.1).sqrt() / 3.0;
        }
        row[0] = t;
        row[24] = -1.234e-17;
        row[22] = f64::MIN_POSITIVE;
        DiagnosticsRecord::from_row(&row).unwrap()
    }

    #[test]
    fn empty_file_gets_header_and_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        append_series_row(&record(0.0), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], DiagnosticsRecord::COLUMNS.join(","));
    }

    #[test]
    fn n_rows_give_n_plus_one_lines_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let recs: Vec<_> = (0..7).map(|i| record(i as f64 * 0.1)).collect();
        for r in &recs {
            append_series_row(r, &path).unwrap();
        }
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 8);
        let back = read_series(&path).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn create_truncates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        append_series_row(&record(0.0), &path).unwrap();
        let mut w = SeriesWriter::create(&path).unwrap();
        w.write(&record(1.0)).unwrap();
        w.flush().unwrap();
        assert_eq!(read_series(&path).unwrap(), vec![record(1.0)]);
    }

    #[test]
    fn bad_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_series(&path), Err(SeriesError::BadHeader)));
        let mut text = DiagnosticsRecord::COLUMNS.join(",");
        text.push('\n');
        text.push_str(&["x"; 28].join(","));
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            read_series(&path),
            Err(SeriesError::BadValue { column: "time", .. })
        ));
    }
}
