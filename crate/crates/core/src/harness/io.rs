//! Chain CSV files: header `x1,...,xd`, one row per stored sample, values
//! in `{:.16e}` (17 significant digits, exact round trip for `f64`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::chain::Chain;
use crate::error::{Error, Result};

pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_chain<W: Write>(out: W, chain: &Chain) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let header: Vec<String> = (1..=chain.dim()).map(|j| format!("x{j}")).collect();
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for row in chain.rows() {
        w.write_record(row.iter().map(|x| format_value(*x))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_chain_csv(path: impl AsRef<Path>, chain: &Chain) -> Result<()> {
    write_chain(BufWriter::new(File::create(path)?), chain)
}

fn parse_error(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column,
        message: message.into(),
    }
}

/// Reads a chain written by [`write_chain_csv`]. Only positions survive the
/// round trip; counts and timings are reset.
pub fn read_chain_csv(path: impl AsRef<Path>) -> Result<Chain> {
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
    for (j, name) in header.iter().enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(parse_error(1, j + 1, format!("expected column name `x{}`, found `{name}`", j + 1)));
        }
    }
    let dim = header.len();
    if dim == 0 {
        return Err(parse_error(1, 1, "empty header"));
    }
    let mut samples = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_error(row, 1, e.to_string()))?;
        if rec.len() != dim {
            return Err(parse_error(row, rec.len().min(dim), format!("expected {dim} fields, found {}", rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| parse_error(row, j + 1, format!("not a number: `{field}`")))?;
            if !x.is_finite() {
                return Err(parse_error(row, j + 1, "non-finite value"));
            }
            samples.push(x);
        }
    }
    Ok(Chain::from_rows(dim, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::EventCounts;

    #[test]
    fn exact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut c = Chain::new(2, "test");
        for x in [[0.1, -1e-300], [std::f64::consts::PI, 1.0 / 3.0], [f64::MAX, f64::MIN_POSITIVE]] {
            c.push(&x, EventCounts::default(), 1.0);
        }
        write_chain_csv(&path, &c).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x1,x2\n") && !text.contains('\r'));
        let back = read_chain_csv(&path).unwrap();
        assert_eq!(back.samples(), c.samples());
    }

    #[test]
    fn bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "x1,x2\n1.0,oops\n").unwrap();
        assert!(matches!(read_chain_csv(&p), Err(Error::Parse { row: 2, column: 2, .. })));
        std::fs::write(&p, "a,b\n").unwrap();
        assert!(matches!(read_chain_csv(&p), Err(Error::Parse { row: 1, .. })));
        std::fs::write(&p, "").unwrap();
        assert!(matches!(read_chain_csv(&p), Err(Error::EmptyFile)));
    }
}
