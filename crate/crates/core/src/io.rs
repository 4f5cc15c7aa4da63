//! Plain-text matrix and vector formats, and atomic file output.
//!
//! Matrix: a header line `n p m`, then `n` rows of `p` whitespace-separated values.
//!
//! Vector: a header line `p m k`, a line with the `k` zero-based block indices of
//! the support (blank when `k = 0`), then `p` values, one per line.
//!
//! Values are written with 17 significant digits so they parse back bit-identically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Real, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Matrix file contents before any dictionary normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile<T: Real> {
    pub entries: DMatrix<T>,
    pub block_size: usize,
}

/// Block-structured vector file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile<T: Real> {
    pub values: DVector<T>,
    pub block_size: usize,
    pub support: Vec<usize>,
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| Error::Parse {
        line,
        msg: format!("expected non-negative integer for {what}, found {tok:?}"),
    })
}

fn parse_value<T: Real>(tok: &str, line: usize) -> Result<T> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a decimal value, found {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value {tok:?}"),
        });
    }
    T::from_f64(v).ok_or_else(|| Error::Parse {
        line,
        msg: format!("value {tok:?} not representable"),
    })
}

fn header(text: &str, line: usize, names: [&str; 3]) -> Result<[usize; 3]> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(Error::Parse {
            line,
            msg: format!("header must be `{} {} {}`", names[0], names[1], names[2]),
        });
    }
    Ok([
        parse_usize(toks[0], line, names[0])?,
        parse_usize(toks[1], line, names[1])?,
        parse_usize(toks[2], line, names[2])?,
    ])
}

pub fn parse_matrix<T: Real>(text: &str) -> Result<MatrixFile<T>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, h) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty matrix file".into(),
    })?;
    let [n, p, m] = header(h, hl + 1, ["n", "p", "m"])?;
    if m == 0 || p % m != 0 {
        return Err(Error::Parse {
            line: hl + 1,
            msg: format!("block size {m} does not divide column count {p}"),
        });
    }
    let mut data = Vec::with_capacity(n * p);
    let mut rows = 0;
    for (idx, l) in lines {
        if rows == n {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("more than the declared {n} rows"),
            });
        }
        let before = data.len();
        for tok in l.split_whitespace() {
            data.push(parse_value::<T>(tok, idx + 1)?);
        }
        if data.len() - before != p {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {p} values, found {}", data.len() - before),
            });
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            line: text.lines().count() + 1,
            msg: format!("expected {n} rows, found {rows}"),
        });
    }
    Ok(MatrixFile {
        entries: DMatrix::from_row_slice(n, p, &data),
        block_size: m,
    })
}

pub fn format_matrix<T: Real>(entries: &DMatrix<T>, block_size: usize) -> String {
    let mut out = String::with_capacity(entries.len() * 25 + 32);
    let _ = writeln!(out, "{} {} {}", entries.nrows(), entries.ncols(), block_size);
    for row in entries.row_iter() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&fmt_f64(v.as_f64()));
        }
        out.push('\n');
    }
    out
}

pub fn parse_vector<T: Real>(text: &str) -> Result<VectorFile<T>> {
    let mut lines = text.lines().enumerate();
    let (hl, h) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty vector file".into(),
        })?;
    let [p, m, k] = header(h, hl + 1, ["p", "m", "k"])?;
    if m == 0 || p % m != 0 {
        return Err(Error::Parse {
            line: hl + 1,
            msg: format!("block size {m} does not divide length {p}"),
        });
    }
    let (sl, s) = lines.next().unwrap_or((hl + 1, ""));
    let support = s
        .split_whitespace()
        .map(|t| parse_usize(t, sl + 1, "support index"))
        .collect::<Result<Vec<_>>>()?;
    if support.len() != k {
        return Err(Error::Parse {
            line: sl + 1,
            msg: format!("expected {k} support indices, found {}", support.len()),
        });
    }
    if let Some(&bad) = support.iter().find(|&&b| b >= p / m) {
        return Err(Error::Parse {
            line: sl + 1,
            msg: format!("support index {bad} out of range for {} blocks", p / m),
        });
    }
    let mut values = Vec::with_capacity(p);
    let mut last_line = sl + 1;
    for (idx, l) in lines {
        last_line = idx + 1;
        for tok in l.split_whitespace() {
            values.push(parse_value::<T>(tok, idx + 1)?);
        }
    }
    if values.len() != p {
        return Err(Error::Parse {
            line: last_line,
            msg: format!("expected {p} values, found {}", values.len()),
        });
    }
    Ok(VectorFile {
        values: DVector::from_vec(values),
        block_size: m,
        support,
    })
}

pub fn format_vector<T: Real>(values: &DVector<T>, block_size: usize, support: &[usize]) -> String {
    let mut out = String::with_capacity(values.len() * 25 + 64);
    let _ = writeln!(out, "{} {} {}", values.len(), block_size, support.len());
    let idx: Vec<String> = support.iter().map(|s| s.to_string()).collect();
    out.push_str(&idx.join(" "));
    out.push('\n');
    for v in values.iter() {
        out.push_str(&fmt_f64(v.as_f64()));
        out.push('\n');
    }
    out
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// renamed into place only after the write succeeds.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_errors_carry_line_numbers() {
        let err = parse_matrix::<f64>("2 2 1\n1 0\n0 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_matrix::<f64>("2 2 1\n1 0 4\n0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_matrix::<f64>("2 3 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_matrix::<f64>("2 2 1\n1 0\n").is_err());
        assert!(parse_matrix::<f64>("").is_err());
    }

    #[test]
    fn vector_with_empty_support() {
        let v = parse_vector::<f64>("4 2 0\n\n0\n0\n0\n0\n").unwrap();
        assert!(v.support.is_empty());
        assert_eq!(v.values.len(), 4);
        assert!(parse_vector::<f64>("4 2 1\n5\n0\n0\n0\n0\n").is_err());
        assert!(parse_vector::<f64>("4 2 1\n1\n0\n0\n").is_err());
    }

    proptest! {
        #[test]
        fn matrix_text_round_trips(rows in 1usize..5, blocks in 1usize..4, m in 1usize..3,
                                   seed in any::<u64>()) {
            let p = blocks * m;
            let mut r = crate::rng::stream(seed);
            let mat = DMatrix::<f64>::from_fn(rows, p, |_, _| crate::rng::standard_normal(&mut r));
            let parsed = parse_matrix::<f64>(&format_matrix(&mat, m)).unwrap();
            prop_assert_eq!(parsed.block_size, m);
            prop_assert_eq!(parsed.entries, mat);
        }

        #[test]
        fn vector_text_round_trips(vals in proptest::collection::vec(-1e6f64..1e6, 6),
                                   support in proptest::sample::subsequence(vec![0usize, 1, 2], 0..=3)) {
            let v = DVector::from_vec(vals);
            let parsed = parse_vector::<f64>(&format_vector(&v, 2, &support)).unwrap();
            prop_assert_eq!(parsed.values, v);
            prop_assert_eq!(parsed.support, support);
        }
    }
}
