use std::fs;
use std::path::Path;

use super::{io_err, DataError};
use crate::gmm::PatchMatrix;

pub const EMB_MAGIC: [u8; 4] = *b"EMB1";
const HEADER: usize = 12;

pub fn encode_embedding(m: &PatchMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * m.data().len());
    out.extend_from_slice(&EMB_MAGIC);
    out.extend_from_slice(&(m.n_patches() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8], path: &Path) -> Result<PatchMatrix, DataError> {
    if bytes.len() < HEADER {
        return Err(DataError::Truncated { path: path.into(), expected: HEADER, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != EMB_MAGIC {
        return Err(DataError::BadMagic { path: path.into(), found: magic });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (n, dim) = (word(4), word(8));
    let expected = HEADER + 4 * n * dim;
    if bytes.len() != expected {
        return Err(DataError::Truncated { path: path.into(), expected, found: bytes.len() });
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    PatchMatrix::new(n, dim, data).map_err(|e| DataError::Invalid { path: path.into(), message: e.to_string() })
}

pub fn write_embedding(path: impl AsRef<Path>, m: &PatchMatrix) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_embedding(m)).map_err(io_err(path))
}

pub fn read_embedding(path: impl AsRef<Path>) -> Result<PatchMatrix, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_embedding(&bytes, path)
}

/// Reads an embedding and checks its dimension against `dim`.
pub fn read_embedding_checked(path: impl AsRef<Path>, dim: usize) -> Result<PatchMatrix, DataError> {
    let m = read_embedding(&path)?;
    if m.dim() != dim {
        return Err(DataError::DimMismatch { path: path.as_ref().into(), expected: dim, found: m.dim() });
    }
    Ok(m)
}
