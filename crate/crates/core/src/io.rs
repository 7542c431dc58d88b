//! Dataset CSV: header `y,x1,...,xp`, one observation per line.

use std::io::Read;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::LabeledDataset;

/// Parse a raw (not yet whitened) dataset. Errors carry the 1-based line.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| parse_error(e, 1))?,
        None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
    };
    let p = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("y".to_string())
        .chain((1..=p).map(|j| format!("x{j}")))
        .collect();
    if p == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be `y,x1,...,xp`".into(),
        });
    }
    let mut y = Vec::new();
    let mut x = Vec::new();
    for row in rows {
        let row = row.map_err(|e| parse_error(e, 0))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != p + 1 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", p + 1, row.len()),
            });
        }
        for (k, field) in row.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("`{field}` in column {} is not a number", k + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite value `{field}`"),
                });
            }
            if k == 0 {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, p), x).expect("row lengths checked");
    LabeledDataset::raw(x, Array1::from(y))
}

fn parse_error(e: csv::Error, fallback: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}
