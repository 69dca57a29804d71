//! Matrix files.
//!
//! Binary layout, little-endian: magic `JHSV`, `u32` rows, `u32` cols,
//! `u32` flags, `u32` n_plus, then the entries in column-major order as
//! `f64`. Flag bit 0 marks a stored signature; without it n_plus is ignored.
//! The text alternative is CSV with one matrix row per line.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::{ColumnMatrix, Signature};

pub const MAGIC: [u8; 4] = *b"JHSV";
pub const HEADER_LEN: usize = 20;
const FLAG_SIGNATURE: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a JHSV file")]
    BadMagic,
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unknown flags {0:#x}")]
    BadFlags(u32),
    #[error("n_plus {n_plus} exceeds {cols} columns")]
    BadSignature { n_plus: usize, cols: usize },
    #[error("dimension {0} does not fit the header")]
    TooLarge(usize),
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

fn u32_of(x: usize) -> Result<u32, IoError> {
    u32::try_from(x).map_err(|_| IoError::TooLarge(x))
}

pub fn encode_matrix(m: &ColumnMatrix, sig: Option<Signature>) -> Result<Vec<u8>, IoError> {
    if let Some(s) = sig {
        if s.order() != m.cols() {
            return Err(IoError::BadSignature {
                n_plus: s.n_plus(),
                cols: m.cols(),
            });
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&u32_of(m.rows())?.to_le_bytes());
    out.extend_from_slice(&u32_of(m.cols())?.to_le_bytes());
    let flags = if sig.is_some() { FLAG_SIGNATURE } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&u32_of(sig.map_or(0, |s| s.n_plus()))?.to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(ColumnMatrix, Option<Signature>), IoError> {
    if bytes.len() < HEADER_LEN {
        return Err(IoError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(IoError::BadMagic);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols, flags, n_plus) = (word(1), word(2), word(3) as u32, word(4));
    if flags & !FLAG_SIGNATURE != 0 {
        return Err(IoError::BadFlags(flags));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|k| k.checked_mul(8))
        .and_then(|k| k.checked_add(HEADER_LEN))
        .ok_or(IoError::TooLarge(rows))?;
    if bytes.len() != expected {
        return Err(IoError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let sig = if flags & FLAG_SIGNATURE != 0 {
        Some(Signature::new(cols, n_plus).ok_or(IoError::BadSignature { n_plus, cols })?)
    } else {
        None
    };
    Ok((ColumnMatrix::from_col_major(rows, cols, data), sig))
}

pub fn write_matrix(path: &Path, m: &ColumnMatrix, sig: Option<Signature>) -> Result<(), IoError> {
    let bytes = encode_matrix(m, sig)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(ColumnMatrix, Option<Signature>), IoError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_matrix(&bytes)
}

/// One row per line, shortest round-trip formatting.
pub fn matrix_to_csv(m: &ColumnMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format!("{:?}", m.get(i, j))).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn parse_value(tok: &str, line: usize) -> Result<f64, IoError> {
    tok.trim().parse().map_err(|e| IoError::Csv {
        line,
        msg: format!("{tok:?}: {e}"),
    })
}

pub fn matrix_from_csv(text: &str) -> Result<ColumnMatrix, IoError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| parse_value(t, k + 1))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(IoError::Csv {
                    line: k + 1,
                    msg: format!("{} fields, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Ok(ColumnMatrix::from_rows(&refs))
}

/// One value per line.
pub fn vector_to_csv(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}\n")).collect()
}

pub fn vector_from_csv(text: &str) -> Result<Vec<f64>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| parse_value(l, k + 1))
        .collect()
}

/// Reads `.csv` as text and anything else as binary.
pub fn load_matrix(path: &Path) -> Result<(ColumnMatrix, Option<Signature>), IoError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Ok((matrix_from_csv(&fs::read_to_string(path)?)?, None))
    } else {
        read_matrix(path)
    }
}
