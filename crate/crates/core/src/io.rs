//! CSV input and output.
//!
//! Input files carry a header row. Every column except the label column is
//! a covariate, taken in file order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Dataset;

pub const DEFAULT_LABEL_COLUMN: &str = "y";

pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers.iter().position(|h| h == label_column).ok_or_else(|| {
        Error::MalformedCsv { line: 1, message: format!("no column named '{label_column}'") }
    })?;
    let n_features = headers.len() - 1;

    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i as u64 + 2, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::MalformedCsv {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::MalformedCsv {
                line,
                message: format!("column '{}': cannot parse '{field}' as a number", &headers[j]),
            })?;
            if j == label_idx {
                let label = match value {
                    0.0 => 0,
                    1.0 => 1,
                    v => return Err(Error::NonBinaryResponse { row: i, value: v }),
                };
                y.push(label);
            } else {
                if !value.is_finite() {
                    return Err(Error::MalformedCsv {
                        line,
                        message: format!("column '{}' is not finite", &headers[j]),
                    });
                }
                x.push(value);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::MalformedCsv { line: 1, message: "no data rows".into() });
    }
    Dataset::new(x, n_features, y)
}

pub fn read_csv_path(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    read_csv(std::fs::File::open(path)?, label_column)
}

/// Writes `x1..xp,y` with round-trip precision.
pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let header: Vec<String> =
        (1..=data.n_features()).map(|j| format!("x{j}")).chain(std::iter::once("y".into())).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..data.n_rows() {
        for v in data.row(i) {
            write!(w, "{v:.16e},")?;
        }
        writeln!(w, "{}", data.label(i))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(data, std::fs::File::create(path)?)
}
