//! Matrix Market import/export for dense real matrices.
//!
//! Reads both `array` (column-major dense) and `coordinate` (sparse
//! triplet) formats with `general` or `symmetric` symmetry; writes the
//! dense `array` format. Only the `real`/`integer` fields are supported —
//! the systems handled here are real-valued.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Array,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Reads a dense matrix from a Matrix Market file.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| match e {
        Error::Io(msg) => Error::Io(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses Matrix Market text into a dense matrix.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Io("empty Matrix Market file".into()))?;
    let tokens: Vec<String> =
        header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() < 4 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Io("missing %%MatrixMarket matrix header".into()));
    }
    let layout = match tokens[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(Error::Io(format!("unsupported layout '{other}'"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(Error::Io(format!("unsupported field '{other}'"))),
    }
    let symmetry = match tokens.get(4).map(String::as_str) {
        None | Some("general") => Symmetry::General,
        Some("symmetric") => Symmetry::Symmetric,
        Some(other) => return Err(Error::Io(format!("unsupported symmetry '{other}'"))),
    };

    let mut rest = lines.filter(|l| !l.trim_start().starts_with('%') && !l.trim().is_empty());
    let size_line = rest
        .next()
        .ok_or_else(|| Error::Io("missing size line".into()))?;
    let sizes: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::Io(format!("bad size '{t}': {e}"))))
        .collect::<Result<_>>()?;

    match layout {
        Layout::Array => {
            let [rows, cols] = sizes[..] else {
                return Err(Error::Io("array size line must be 'rows cols'".into()));
            };
            if rows == 0 || cols == 0 {
                return Err(Error::Io("matrix dimensions must be positive".into()));
            }
            let values: Vec<f64> = rest
                .flat_map(|l| l.split_whitespace())
                .map(|t| t.parse::<f64>().map_err(|e| Error::Io(format!("bad value '{t}': {e}"))))
                .collect::<Result<_>>()?;
            let expected = match symmetry {
                Symmetry::General => rows * cols,
                Symmetry::Symmetric => {
                    if rows != cols {
                        return Err(Error::Io("symmetric matrix must be square".into()));
                    }
                    rows * (rows + 1) / 2
                }
            };
            if values.len() != expected {
                return Err(Error::Io(format!(
                    "expected {expected} entries, found {}",
                    values.len()
                )));
            }
            let mut m = DMatrix::<f64>::zeros(rows, cols);
            match symmetry {
                Symmetry::General => {
                    // Array format is column-major.
                    let mut it = values.into_iter();
                    for j in 0..cols {
                        for i in 0..rows {
                            m[(i, j)] = it.next().unwrap();
                        }
                    }
                }
                Symmetry::Symmetric => {
                    // Lower triangle, column-major.
                    let mut it = values.into_iter();
                    for j in 0..cols {
                        for i in j..rows {
                            let v = it.next().unwrap();
                            m[(i, j)] = v;
                            m[(j, i)] = v;
                        }
                    }
                }
            }
            Ok(m)
        }
        Layout::Coordinate => {
            let [rows, cols, nnz] = sizes[..] else {
                return Err(Error::Io("coordinate size line must be 'rows cols nnz'".into()));
            };
            if rows == 0 || cols == 0 {
                return Err(Error::Io("matrix dimensions must be positive".into()));
            }
            let mut m = DMatrix::<f64>::zeros(rows, cols);
            let mut seen = 0usize;
            for line in rest {
                let mut parts = line.split_whitespace();
                let i: usize = parts
                    .next()
                    .ok_or_else(|| Error::Io("truncated entry line".into()))?
                    .parse()
                    .map_err(|e| Error::Io(format!("bad row index: {e}")))?;
                let j: usize = parts
                    .next()
                    .ok_or_else(|| Error::Io("truncated entry line".into()))?
                    .parse()
                    .map_err(|e| Error::Io(format!("bad column index: {e}")))?;
                let v: f64 = parts
                    .next()
                    .ok_or_else(|| Error::Io("missing value".into()))?
                    .parse()
                    .map_err(|e| Error::Io(format!("bad value: {e}")))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::Io(format!("index ({i}, {j}) out of bounds")));
                }
                m[(i - 1, j - 1)] = v;
                if symmetry == Symmetry::Symmetric {
                    m[(j - 1, i - 1)] = v;
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(Error::Io(format!("expected {nnz} entries, found {seen}")));
            }
            Ok(m)
        }
    }
}

/// Writes a dense matrix in Matrix Market `array real general` format with
/// full round-trip precision.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Renders a matrix as Matrix Market `array real general` text.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let _ = writeln!(out, "{:?}", m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_array_general() {
        let text = "%%MatrixMarket matrix array real general\n% comment\n2 3\n1\n2\n3\n4\n5\n6\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(m.shape(), (2, 3));
        // Column-major: first column is (1, 2).
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 0)], 2.0);
        assert_eq!(m[(0, 1)], 3.0);
    }

    #[test]
    fn parses_coordinate_symmetric() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n3 3 2\n1 1 4.0\n3 1 -1.5\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(m[(0, 0)], 4.0);
        assert_eq!(m[(2, 0)], -1.5);
        assert_eq!(m[(0, 2)], -1.5);
        assert_eq!(m[(1, 1)], 0.0);
    }

    #[test]
    fn parses_array_symmetric_lower_triangle() {
        let text = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 0)], 2.0);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 1)], 3.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("%%MatrixMarket matrix array complex general\n1 1\n1\n").is_err());
        assert!(parse_matrix("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n").is_err());
        assert!(
            parse_matrix("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 5.0\n").is_err()
        );
    }

    #[test]
    fn round_trips_through_format() {
        let m = DMatrix::from_row_slice(2, 2, &[1.5, -2.25, 1.0 / 3.0, 1e-17]);
        let parsed = parse_matrix(&format_matrix(&m)).unwrap();
        assert_relative_eq!(parsed, m, epsilon = 0.0);
    }
}
