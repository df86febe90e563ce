//! Matrix Market coordinate I/O.
//!
//! Only the `matrix coordinate real general` flavor is supported, with
//! 1-based indices on disk. Values are printed with 17 significant digits so
//! a write/read round trip is exact on both pattern and values. Duplicate
//! coordinate entries are summed on read.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::Error;
use crate::sparse::SparseMatrix;
use crate::Result;

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.into() }
}

/// Reads a coordinate-format real general Matrix Market file.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line.map_err(|e| io_err(path, e))?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(parse_err(path, "empty file, expected Matrix Market header")),
        }
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let expected: Vec<&str> = HEADER.split_whitespace().collect();
    if fields.len() != expected.len()
        || !fields
            .iter()
            .zip(&expected)
            .all(|(a, b)| a.eq_ignore_ascii_case(b))
    {
        return Err(parse_err(path, format!("unsupported header `{header}`, expected `{HEADER}`")));
    }

    let size_line = loop {
        match lines.next() {
            Some(line) => {
                let line = line.map_err(|e| io_err(path, e))?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('%') {
                    continue;
                }
                break line;
            }
            None => return Err(parse_err(path, "missing size line")),
        }
    };
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(parse_err(path, format!("size line `{size_line}` must have 3 fields")));
    }
    let nrows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(path, format!("bad row count `{}`", dims[0])))?;
    let ncols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(path, format!("bad column count `{}`", dims[1])))?;
    let nnz: usize = dims[2]
        .parse()
        .map_err(|_| parse_err(path, format!("bad entry count `{}`", dims[2])))?;

    let mut triplets = Vec::with_capacity(nnz);
    let mut seen = 0usize;
    for line in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(path, format!("entry line `{trimmed}` must have 3 fields")));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, format!("bad row index `{}`", fields[0])))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, format!("bad column index `{}`", fields[1])))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, format!("non-numeric value `{}`", fields[2])))?;
        if i < 1 || i > nrows {
            return Err(parse_err(path, format!("row index {i} outside 1..={nrows}")));
        }
        if j < 1 || j > ncols {
            return Err(parse_err(path, format!("column index {j} outside 1..={ncols}")));
        }
        triplets.push((i - 1, j - 1, v));
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(path, format!("declared {nnz} entries, found {seen}")));
    }
    SparseMatrix::from_triplets(nrows, ncols, &triplets)
}

/// Writes a matrix in coordinate format with 17 significant digits.
pub fn write_matrix_market(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, s: String| -> Result<()> {
        w.write_all(s.as_bytes()).map_err(|e| io_err(path, e))
    };
    write(&mut w, format!("{HEADER}\n"))?;
    write(&mut w, format!("{} {} {}\n", a.nrows(), a.ncols(), a.nnz()))?;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            write(&mut w, format!("{} {} {:.16e}\n", i + 1, j + 1, v))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a plain-text vector: one value per line, `#` or `%` comments allowed.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        for field in trimmed.split_whitespace() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, format!("non-numeric value `{field}`")))?;
            out.push(v);
        }
    }
    Ok(out)
}
