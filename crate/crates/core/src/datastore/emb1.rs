//! EMB1 embedding-matrix files.
//!
//! Little-endian layout:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `EMB1`                            |
//! | 4      | 4    | u32 version (1)                         |
//! | 8      | 8    | u64 row count                           |
//! | 16     | 4    | u32 column count                        |
//! | 20     | 1    | u8 dtype (1 = IEEE-754 binary32)        |
//! | 21     | 7    | zero padding                            |
//! | 28     | 4·n·c| row-major binary32 payload              |
//!
//! An optional label block may follow: magic `LBL1`, a u8 kind
//! (0 = class ids as u32, 1 = regression targets as binary32) and one value
//! per row.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atomic::write_atomic;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const LABEL_MAGIC: &[u8; 4] = b"LBL1";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Classes(Vec<u32>),
    Regression(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(v) => v.len(),
            Labels::Regression(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Labels {
        match self {
            Labels::Classes(v) => Labels::Classes(indices.iter().map(|&i| v[i]).collect()),
            Labels::Regression(v) => Labels::Regression(indices.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Number of classes `C` for class labels (`max id + 1`).
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Labels::Classes(v) => Some(v.iter().max().map_or(0, |&m| m as usize + 1)),
            Labels::Regression(_) => None,
        }
    }
}

fn to_f32(v: f64, what: &str) -> Result<f32> {
    let x = v as f32;
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("{what}: {v} is not representable as binary32")));
    }
    Ok(x)
}

/// Serialize to EMB1 bytes.
pub fn encode(matrix: &Matrix, labels: Option<&Labels>) -> Result<Vec<u8>> {
    if let Some(l) = labels {
        if l.len() != matrix.rows() {
            return Err(Error::shape("label count", matrix.rows(), l.len()));
        }
    }
    let cols = u32::try_from(matrix.cols())
        .map_err(|_| Error::Usage(format!("{} columns exceed the EMB1 limit", matrix.cols())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * matrix.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&[0u8; 7]);
    for &v in matrix.as_slice() {
        out.extend_from_slice(&to_f32(v, "embedding value")?.to_le_bytes());
    }
    match labels {
        None => {}
        Some(Labels::Classes(ids)) => {
            out.extend_from_slice(LABEL_MAGIC);
            out.push(0);
            for &id in ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        Some(Labels::Regression(ys)) => {
            out.extend_from_slice(LABEL_MAGIC);
            out.push(1);
            for &y in ys {
                out.extend_from_slice(&to_f32(y, "regression label")?.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Parse EMB1 bytes. `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(Matrix, Option<Labels>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::format(path, format!("bad magic {magic:?}, expected \"EMB1\"")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::format(path, format!("unknown version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = read_u32(bytes, 16) as u64;
    let dtype = bytes[20];
    if dtype != DTYPE_F32 {
        return Err(Error::format(path, format!("unknown dtype code {dtype}")));
    }
    if bytes[21..28].iter().any(|&b| b != 0) {
        return Err(Error::format(path, "non-zero header padding"));
    }
    let payload_end = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::format(path, format!("{rows}x{cols} overflows")))?;
    if (bytes.len() as u64) < payload_end {
        return Err(Error::Truncated {
            path: path.into(),
            expected: payload_end,
            actual: bytes.len() as u64,
        });
    }
    let (rows, cols, payload_end) = (rows as usize, cols as usize, payload_end as usize);
    let data: Vec<f64> = bytes[HEADER_LEN..payload_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let matrix = Matrix::from_vec(rows, cols, data)
        .map_err(|e| Error::format(path, e.to_string()))?;

    let rest = &bytes[payload_end..];
    if rest.is_empty() {
        return Ok((matrix, None));
    }
    if rest.len() < 5 || &rest[..4] != LABEL_MAGIC {
        return Err(Error::format(path, "trailing bytes after payload are not a LBL1 block"));
    }
    let expected = payload_end + 5 + 4 * rows;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    let values = rest[5..].chunks_exact(4);
    let labels = match rest[4] {
        0 => Labels::Classes(values.map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()),
        1 => {
            let ys: Vec<f64> = values
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            if ys.iter().any(|y| !y.is_finite()) {
                return Err(Error::format(path, "non-finite regression label"));
            }
            Labels::Regression(ys)
        }
        k => return Err(Error::format(path, format!("unknown label kind {k}"))),
    };
    Ok((matrix, Some(labels)))
}

/// Write an EMB1 file atomically (temp file + rename).
pub fn write_embeddings(matrix: &Matrix, labels: Option<&Labels>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(matrix, labels)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<(Matrix, Option<Labels>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Round every entry through binary32, the precision EMB1 stores.
pub fn quantize(matrix: &Matrix) -> Matrix {
    matrix.map(|v| v as f32 as f64)
}
