//! Plain-text matrix format shared by the antenna and channel fixtures.
//!
//! A matrix block is a header line `R C` followed by `R` lines of `2C`
//! whitespace-separated decimals, read as interleaved `(re, im)` pairs.
//! Blank lines are ignored everywhere.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// Line cursor over text input that skips blank lines and remembers
/// 1-based line numbers for diagnostics.
pub(crate) struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last_line: usize,
}

impl<'a> LineReader<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            last_line: 0,
        }
    }

    pub(crate) fn next_line(&mut self) -> Option<&'a str> {
        for (i, line) in self.lines.by_ref() {
            self.last_line = i + 1;
            let t = line.trim();
            if !t.is_empty() {
                return Some(t);
            }
        }
        None
    }

    pub(crate) fn expect_line(&mut self, what: &str) -> Result<&'a str> {
        let line_no = self.last_line + 1;
        self.next_line().ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("unexpected end of input, expected {what}"),
        })
    }

    pub(crate) fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.last_line,
            msg: msg.into(),
        }
    }

    /// Parses a line holding exactly `N` unsigned integers.
    pub(crate) fn header<const N: usize>(&mut self, what: &str) -> Result<[usize; N]> {
        let line = self.expect_line(what)?;
        let mut out = [0usize; N];
        let mut toks = line.split_whitespace();
        for slot in out.iter_mut() {
            let tok = toks
                .next()
                .ok_or_else(|| self.err(format!("{what}: expected {N} integers")))?;
            *slot = tok
                .parse()
                .map_err(|_| self.err(format!("{what}: invalid integer {tok:?}")))?;
        }
        if toks.next().is_some() {
            return Err(self.err(format!("{what}: expected {N} integers")));
        }
        Ok(out)
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        if self.next_line().is_some() {
            return Err(self.err("trailing content"));
        }
        Ok(())
    }
}

fn parse_float(reader: &LineReader<'_>, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| reader.err(format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(reader.err(format!("non-finite number {tok:?}")));
    }
    Ok(v)
}

pub(crate) fn read_matrix_block(reader: &mut LineReader<'_>) -> Result<CMatrix> {
    let [rows, cols] = reader.header::<2>("matrix header `R C`")?;
    let width = cols
        .checked_mul(2)
        .ok_or_else(|| reader.err("column count overflow"))?;
    // Entries are collected row by row; storage grows with the input, never
    // with the declared header.
    let mut data: Vec<C64> = Vec::new();
    for r in 0..rows {
        let line = reader.expect_line(&format!("matrix row {}", r + 1))?;
        let mut n = 0usize;
        let mut toks = line.split_whitespace();
        while let Some(re_tok) = toks.next() {
            let im_tok = toks
                .next()
                .ok_or_else(|| reader.err("odd number of values in matrix row"))?;
            let re = parse_float(reader, re_tok)?;
            let im = parse_float(reader, im_tok)?;
            data.push(C64::new(re, im));
            n += 2;
            if n > width {
                break;
            }
        }
        if n != width {
            return Err(reader.err(format!("matrix row has {n} values, expected {width}")));
        }
    }
    Ok(CMatrix::from_row_slice(rows, cols, &data))
}

/// Parses a single matrix block; trailing content is an error.
pub fn parse_matrix(text: &str) -> Result<CMatrix> {
    let mut reader = LineReader::new(text);
    let m = read_matrix_block(&mut reader)?;
    reader.expect_end()?;
    Ok(m)
}

/// Appends a matrix block. Values use the shortest representation that
/// parses back to the same `f64`, so write/parse is lossless.
pub fn write_matrix(out: &mut String, m: &CMatrix) {
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let mut first = true;
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{:e} {:e}", z.re, z.im);
        }
        out.push('\n');
    }
}

pub fn matrix_to_string(m: &CMatrix) -> String {
    let mut s = String::new();
    write_matrix(&mut s, m);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_interleaved_pairs() {
        let m = parse_matrix("2 1\n1.5 -2\n\n0 3e-1\n").unwrap();
        assert_eq!(m.shape(), (2, 1));
        assert_eq!(m[(0, 0)], C64::new(1.5, -2.0));
        assert_eq!(m[(1, 0)], C64::new(0.0, 0.3));
    }

    #[test]
    fn rejects_short_rows_and_missing_rows() {
        assert!(matches!(parse_matrix("1 2\n1 2 3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_matrix("2 1\n1 2\n").is_err());
        assert!(parse_matrix("1 1\n1 2\n3 4\n").is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(parse_matrix("1 1\nnan 0\n").is_err());
        assert!(parse_matrix("1 1\ninf 0\n").is_err());
    }

    #[test]
    fn huge_header_does_not_allocate() {
        assert!(parse_matrix("18446744073709551615 18446744073709551615\n").is_err());
        assert!(parse_matrix("1000000000 1000000000\n1 2\n").is_err());
    }

    proptest! {
        #[test]
        fn write_then_parse_is_lossless(rows in 1usize..5, cols in 1usize..5,
                                        vals in proptest::collection::vec(-1e6f64..1e6, 50)) {
            let m = CMatrix::from_fn(rows, cols, |r, c| {
                let k = 2 * (r * cols + c);
                C64::new(vals[k % 50], vals[(k + 1) % 50] * 1e-7)
            });
            let back = parse_matrix(&matrix_to_string(&m)).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn arbitrary_text_never_panics(s in "\\PC{0,200}") {
            let _ = parse_matrix(&s);
        }
    }
}
