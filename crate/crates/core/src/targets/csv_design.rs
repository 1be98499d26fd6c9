use std::path::Path;

use crate::error::{Error, Result};

/// Design matrix (row-major) and binary labels read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    pub design: Vec<f64>,
    pub labels: Vec<f64>,
    pub rows: usize,
    pub dim: usize,
}

fn parse_error(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column,
        message: message.into(),
    }
}

/// Reads `y,x1,...,xd` with a mandatory header. Rows and columns in errors
/// are 1-based file positions (the header is row 1).
pub fn load_design_csv(path: impl AsRef<Path>) -> Result<DesignData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| Error::Io(e.to_string()))?;
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::EmptyFile),
        Some(r) => r.map_err(|e| parse_error(1, 1, e.to_string()))?,
    };
    if header.len() < 2 || &header[0] != "y" {
        return Err(parse_error(1, 1, "expected header `y,x1,...,xd`"));
    }
    for (j, name) in header.iter().enumerate().skip(1) {
        if name != format!("x{j}") {
            return Err(parse_error(1, j + 1, format!("expected column name `x{j}`, found `{name}`")));
        }
    }
    let dim = header.len() - 1;
    let mut design = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_error(row, 1, e.to_string()))?;
        if rec.len() != dim + 1 {
            return Err(parse_error(row, rec.len().min(dim + 1), format!("expected {} fields, found {}", dim + 1, rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| parse_error(row, j + 1, format!("not a number: `{field}`")))?;
            if !value.is_finite() {
                return Err(parse_error(row, j + 1, "non-finite value"));
            }
            if j == 0 {
                if value != 0.0 && value != 1.0 {
                    return Err(parse_error(row, 1, format!("label must be 0 or 1, found {value}")));
                }
                labels.push(value);
            } else {
                design.push(value);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(DesignData {
        rows: labels.len(),
        design,
        labels,
        dim,
    })
}
