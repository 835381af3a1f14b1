//! Binary relevance-matrix files: `LRPM`, u32 version, u64 rows, u64 cols, then the
//! values as row-major little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use lrp_core::lrp::RelevanceMatrix;
use lrp_core::Matrix;

use crate::error::{PipelineError, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"LRPM";
pub const MATRIX_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8;

pub fn write_matrix<W: Write>(m: &Matrix, mut w: W) -> std::io::Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&MATRIX_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for &v in m.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()
}

/// Reads a whole matrix file; any header/payload disagreement is an error and no
/// partial matrix is returned.
pub fn read_matrix<R: Read>(mut r: R) -> std::result::Result<Matrix, String> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| e.to_string())?;
    if bytes.len() < HEADER_LEN as usize {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(format!("bad magic {:?}", &bytes[..4]));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != MATRIX_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let (rows, cols) = (u64_at(8), u64_at(16));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format!("implausible shape {rows}x{cols}"))?;
    if bytes.len() as u64 != expected {
        return Err(format!(
            "{rows}x{cols} header needs {expected} bytes, file has {}",
            bytes.len()
        ));
    }
    let data = bytes[HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Matrix::from_vec(rows as usize, cols as usize, data).map_err(|e| e.to_string())
}

pub fn export_matrix(m: &Matrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(PipelineError::io(path))?;
    write_matrix(m, BufWriter::new(file)).map_err(PipelineError::io(path))
}

pub fn import_matrix(path: &Path) -> Result<RelevanceMatrix> {
    let file = File::open(path).map_err(PipelineError::io(path))?;
    let bad = |message: String| PipelineError::MatrixFile {
        path: path.to_path_buf(),
        message,
    };
    let m = read_matrix(BufReader::new(file)).map_err(bad)?;
    RelevanceMatrix::new(m).map_err(|e| bad(e.to_string()))
}
