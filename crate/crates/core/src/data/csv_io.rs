use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

/// Which column of a CSV file holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Zero-based column index. Negative-style "last column" is `Last`.
    Index(usize),
    Last,
    /// Header name; requires the file to have a header line.
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("last") {
            return Ok(LabelColumn::Last);
        }
        if let Ok(i) = s.parse::<usize>() {
            return Ok(LabelColumn::Index(i));
        }
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty label column".into()));
        }
        Ok(LabelColumn::Name(s.to_string()))
    }
}

/// Reads a comma-separated file of numeric features and an integer label column.
///
/// A header line is assumed when any cell of the first row fails to parse as
/// a number. `num_classes` is one more than the largest label seen.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    // A trailing blank line surfaces as a one-empty-field record.
    while records.last().is_some_and(|r| r.len() == 1 && r.get(0) == Some("")) {
        records.pop();
    }
    if records.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "file is empty".into(),
        });
    }

    let has_header = records[0].iter().any(|cell| cell.parse::<f64>().is_err());
    let arity = records[0].len();
    let label_idx = match label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Last => arity.saturating_sub(1),
        LabelColumn::Name(name) => {
            if !has_header {
                return Err(Error::Parse {
                    row: 1,
                    message: format!("label column `{name}` requested but file has no header"),
                });
            }
            records[0].iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                row: 1,
                message: format!("no column named `{name}`"),
            })?
        }
    };
    if label_idx >= arity {
        return Err(Error::Parse {
            row: 1,
            message: format!("label column {label_idx} out of range for {arity} columns"),
        });
    }
    if arity < 2 {
        return Err(Error::Parse {
            row: 1,
            message: "need at least one feature column and one label column".into(),
        });
    }

    let first_data = usize::from(has_header);
    if records.len() == first_data {
        return Err(Error::Parse {
            row: 2,
            message: "file has a header but no data rows".into(),
        });
    }
    let n = records.len() - first_data;
    let d = arity - 1;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (offset, rec) in records.iter().enumerate().skip(first_data) {
        let row = offset + 1;
        if rec.len() != arity {
            return Err(Error::Parse {
                row,
                message: format!("expected {arity} columns, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                let y = cell.parse::<usize>().map_err(|_| Error::Parse {
                    row,
                    message: format!("label `{cell}` is not a non-negative integer"),
                })?;
                labels.push(y);
            } else {
                let x = cell.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    message: format!("column {j}: `{cell}` is not a number"),
                })?;
                if !x.is_finite() {
                    return Err(Error::Parse {
                        row,
                        message: format!("column {j}: `{cell}` is not finite"),
                    });
                }
                data.push(x);
            }
        }
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let features = RealMatrix::from_vec(n, d, data)?;
    Dataset::new(features, labels, num_classes)
}

/// Writes `x0..x{d-1},label` with a header line. Values use the shortest
/// representation that parses back to the identical `f64`.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header: Vec<String> = (0..dataset.n_dims())
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for (row, &y) in dataset.features().iter_rows().zip(dataset.labels()) {
        let mut line = String::new();
        for x in row {
            line.push_str(&format!("{x:?},"));
        }
        line.push_str(&y.to_string());
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}
