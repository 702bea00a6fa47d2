//! Dense row-major matrices of vectors and their `EMB1` binary format.
//!
//! Every stage of the pipeline exchanges vectors through [`EmbeddingMatrix`]:
//! frame representations, cluster centroids, symbol embeddings, and random
//! codebooks all use the same carrier, distinguished only by a [`RoleTag`].
//!
//! On disk a matrix is stored as the magic bytes `EMB1`, the row and column
//! counts as little-endian `u32`, and the payload as row-major little-endian
//! `f32`. The format round-trips byte-identically: in memory values are held
//! as `f64`, and widening `f32 -> f64 -> f32` is lossless for finite values.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

/// What the rows of a matrix represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleTag {
    Frames,
    Centroids,
    PhoneEmbeddings,
    Codebook,
}

/// A dense matrix with one vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    role: RoleTag,
}

impl EmbeddingMatrix {
    /// Builds a matrix, validating shape and finiteness.
    pub fn new(rows: usize, dim: usize, data: Vec<f64>, role: RoleTag) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::Data(format!(
                "matrix must have at least one row and one column, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::Data(format!(
                "payload length {} does not match {rows}x{dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {} at index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            rows,
            dim,
            data,
            role,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, role: RoleTag) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Data("ragged rows".into()));
        }
        Self::new(n, dim, rows.into_iter().flatten().collect(), role)
    }

    /// An all-zero matrix. Panics on a zero dimension; use [`Self::new`] for
    /// fallible construction.
    pub fn zeros(rows: usize, dim: usize, role: RoleTag) -> Self {
        assert!(rows > 0 && dim > 0, "zero-sized matrix");
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
            role,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn role(&self) -> RoleTag {
        self.role
    }

    pub fn with_role(mut self, role: RoleTag) -> Self {
        self.role = role;
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    /// Arithmetic mean of all rows.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }
}

/// Squared Euclidean distance between two equal-length vectors.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Encodes a matrix into `EMB1` bytes.
pub fn encode_matrix(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows)
        .map_err(|_| Error::Data(format!("row count {} exceeds u32", m.rows)))?;
    let dim =
        u32::try_from(m.dim).map_err(|_| Error::Data(format!("dim {} exceeds u32", m.dim)))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for &v in &m.data {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::Data(format!("value {v} not representable as f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

/// Decodes `EMB1` bytes into a matrix tagged [`RoleTag::Frames`].
pub fn decode_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file too short for header: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[0..4],
            MAGIC
        )));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("header size overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload length {} does not match header {rows}x{dim} (expected {expected} bytes)",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * dim);
    for chunk in bytes[HEADER_LEN..].chunks_exact(4) {
        let f = f32::from_le_bytes(chunk.try_into().unwrap());
        if !f.is_finite() {
            return Err(Error::Data(format!(
                "non-finite value at element {}",
                data.len()
            )));
        }
        data.push(f as f64);
    }
    EmbeddingMatrix::new(rows, dim, data, RoleTag::Frames).map_err(|e| Error::Format(e.to_string()))
}

/// Reads an `EMB1` file. The caller retags the role if needed.
pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

/// Writes an `EMB1` file atomically (temp file + rename in the same directory).
pub fn write_matrix(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let bytes = encode_matrix(m)?;
    write_atomic(path, &bytes)
}

/// Atomic byte write shared by all persistence paths.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp = std::ffi::OsString::from(".");
    tmp.push(file_name);
    tmp.push(".tmp");
    let tmp_path = match dir {
        Some(d) => d.join(&tmp),
        None => std::path::PathBuf::from(&tmp),
    };
    let mut f = fs::File::create(&tmp_path).map_err(|e| Error::io(&tmp_path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp_path, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp_path, e))?;
    drop(f);
    fs::rename(&tmp_path, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}
