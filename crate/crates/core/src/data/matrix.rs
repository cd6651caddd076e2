//! Binary dense matrix files and the small text matrix variant.
//!
//! Binary layout (little-endian): `b"GSRM"`, `u32` version, `u64` rows,
//! `u64` cols, `u32` dtype (0 = f32), then `rows * cols` f32 values row-major.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"GSRM";
pub const MATRIX_VERSION: u32 = 1;
const DTYPE_F32: u32 = 0;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4;

pub const TEXT_MAGIC: &str = "GSRTXT";

pub fn matrix_to_bytes(m: &Array2<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.len() * 4);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn matrix_from_bytes(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated matrix header"));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::format(path, "not a GSRM matrix file (bad magic)"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != MATRIX_VERSION {
        return Err(Error::format(path, format!("unsupported matrix version {version}")));
    }
    let rows = u64_at(8) as usize;
    let cols = u64_at(16) as usize;
    let dtype = u32_at(24);
    if dtype != DTYPE_F32 {
        return Err(Error::format(path, format!("unsupported dtype code {dtype}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "matrix dimensions overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes but a {rows}x{cols} f32 matrix needs {expected}",
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn save_matrix(path: &Path, m: &Array2<f32>) -> Result<()> {
    std::fs::write(path, matrix_to_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Array2<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    matrix_from_bytes(&bytes, path)
}

/// Rounds through f32, the on-disk precision.
pub fn to_f32(m: &Array2<f64>) -> Array2<f32> {
    m.mapv(|v| v as f32)
}

pub fn to_f64(m: &Array2<f32>) -> Array2<f64> {
    m.mapv(f64::from)
}

/// Either matrix format, detected from the first bytes. The text variant is
/// a `GSRTXT 1 rows cols` header followed by `row col value` lines for the
/// nonzero entries.
pub fn load_any_matrix(path: &Path) -> Result<CsrMatrix> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 6];
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    if n >= 4 && &head[..4] == MATRIX_MAGIC {
        let dense = to_f64(&load_matrix(path)?);
        return Ok(CsrMatrix::from_dense(dense.view()));
    }
    if n < 6 || &head[..] != TEXT_MAGIC.as_bytes() {
        return Err(Error::format(path, "unrecognized matrix format"));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_text_matrix(BufReader::new(file), path)
}

fn read_text_matrix(reader: impl BufRead, path: &Path) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, "empty file")),
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != TEXT_MAGIC || parts[1] != "1" {
        return Err(Error::format(path, format!("bad text matrix header {header:?}")));
    }
    let parse = |s: &str, line: usize| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::format(path, format!("line {line}: expected an integer, got {s:?}")))
    };
    let rows = parse(parts[2], 1)?;
    let cols = parse(parts[3], 1)?;
    let mut triplets = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 3 {
            return Err(Error::format(path, format!("line {line_no}: expected `row col value`")));
        }
        let (r, c) = (parse(f[0], line_no)?, parse(f[1], line_no)?);
        let v: f64 = f[2]
            .parse()
            .map_err(|_| Error::format(path, format!("line {line_no}: bad value {:?}", f[2])))?;
        if r >= rows || c >= cols {
            return Err(Error::format(
                path,
                format!("line {line_no}: entry ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        triplets.push((r, c, v));
    }
    CsrMatrix::from_triplets(rows, cols, triplets).map_err(|e| Error::format(path, e.to_string()))
}
