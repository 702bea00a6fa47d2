//! PCA subspaces of frame vectors and the nuisance-direction collapse.
//!
//! Frame vectors grouped by speaker or utterance are averaged into group
//! means; PCA on those means yields the dominant nuisance directions, and
//! [`collapse`] projects frames onto the orthogonal complement of such a
//! direction: `h_c = h - (h . v) v`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, EmbeddingMatrix, RoleTag};

/// Principal directions of a mean-centered vector set.
///
/// Directions are unit rows ranked by descending eigenvalue; the eigenvalue
/// of direction `i` is the variance of the centered data projected on it.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    pub directions: EmbeddingMatrix,
    pub eigenvalues: Vec<f64>,
    pub center: Vec<f64>,
}

impl SubspaceBasis {
    pub fn ambient_dim(&self) -> usize {
        self.directions.dim()
    }

    pub fn len(&self) -> usize {
        self.directions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.nrows() == 0
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        self.directions.row(i)
    }
}

/// Top-`top_k` principal directions of the mean-centered rows.
///
/// The covariance uses the population convention (divide by the row count),
/// so each eigenvalue equals the projected variance of the centered data.
/// Eigenvector signs are fixed by making the entry of largest magnitude
/// positive, which keeps output deterministic.
pub fn pca(vectors: &EmbeddingMatrix, top_k: usize) -> Result<SubspaceBasis> {
    let n = vectors.nrows();
    let d = vectors.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "pca needs at least 2 rows, got {n}"
        )));
    }
    if top_k == 0 || top_k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "top_k {top_k} out of range for {n}x{d} input"
        )));
    }

    let center = vectors.mean_row();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered_row = vec![0.0; d];
    for row in vectors.iter_rows() {
        for (c, (v, m)) in centered_row.iter_mut().zip(row.iter().zip(&center)) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered_row[i];
            for j in i..d {
                cov[(i, j)] += ci * centered_row[j];
            }
        }
    }
    let scale = 1.0 / n as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] * scale;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut directions = Vec::with_capacity(top_k * d);
    let mut eigenvalues = Vec::with_capacity(top_k);
    for &idx in order.iter().take(top_k) {
        let col = eig.eigenvectors.column(idx);
        let mut v: Vec<f64> = col.iter().copied().collect();
        // Deterministic sign: largest-magnitude entry made positive.
        let lead = (0..d)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap();
        if v[lead] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        directions.extend_from_slice(&v);
        // Rank-deficient trailing eigenvalues come out as float noise around 0.
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(SubspaceBasis {
        directions: EmbeddingMatrix::new(top_k, d, directions, RoleTag::Frames)?,
        eigenvalues,
        center,
    })
}

/// Per-group mean vectors, one row per distinct group ID in ascending ID
/// order. Accumulation follows input order, so results are schedule-free.
pub fn group_means(frames: &EmbeddingMatrix, group_ids: &[usize]) -> Result<EmbeddingMatrix> {
    if group_ids.is_empty() {
        return Err(Error::EmptyInput("no frames".into()));
    }
    if group_ids.len() != frames.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} group ids for {} frames",
            group_ids.len(),
            frames.nrows()
        )));
    }
    let d = frames.dim();
    let mut sums: std::collections::BTreeMap<usize, (Vec<f64>, usize)> =
        std::collections::BTreeMap::new();
    for (row, &g) in frames.iter_rows().zip(group_ids) {
        let entry = sums.entry(g).or_insert_with(|| (vec![0.0; d], 0));
        for (s, v) in entry.0.iter_mut().zip(row) {
            *s += v;
        }
        entry.1 += 1;
    }
    let mut data = Vec::with_capacity(sums.len() * d);
    for (sum, count) in sums.values() {
        data.extend(sum.iter().map(|s| s / *count as f64));
    }
    EmbeddingMatrix::new(sums.len(), d, data, RoleTag::Frames)
}

/// Grid of absolute dot products between the top directions of two bases.
pub fn correlation_grid(
    basis_a: &SubspaceBasis,
    basis_b: &SubspaceBasis,
    top: usize,
) -> Result<EmbeddingMatrix> {
    if basis_a.ambient_dim() != basis_b.ambient_dim() {
        return Err(Error::InvalidArgument(format!(
            "ambient dimensions differ: {} vs {}",
            basis_a.ambient_dim(),
            basis_b.ambient_dim()
        )));
    }
    if top == 0 || top > basis_a.len() || top > basis_b.len() {
        return Err(Error::InvalidArgument(format!(
            "top {top} out of range for bases of {} and {} directions",
            basis_a.len(),
            basis_b.len()
        )));
    }
    let mut data = Vec::with_capacity(top * top);
    for i in 0..top {
        for j in 0..top {
            data.push(dot(basis_a.direction(i), basis_b.direction(j)).abs());
        }
    }
    EmbeddingMatrix::new(top, top, data, RoleTag::Frames)
}

/// Projects every row onto the complement of `direction`:
/// `h_c = h - (h . v) v`. The direction is renormalized internally.
pub fn collapse(frames: &EmbeddingMatrix, direction: &[f64]) -> Result<EmbeddingMatrix> {
    if direction.len() != frames.dim() {
        return Err(Error::InvalidArgument(format!(
            "direction length {} does not match frame dim {}",
            direction.len(),
            frames.dim()
        )));
    }
    let len = norm(direction);
    if len == 0.0 || !len.is_finite() {
        return Err(Error::InvalidArgument("zero direction vector".into()));
    }
    let v: Vec<f64> = direction.iter().map(|x| x / len).collect();
    let mut out = frames.clone();
    for i in 0..out.nrows() {
        let row = out.row_mut(i);
        let proj = dot(row, &v);
        for (x, vi) in row.iter_mut().zip(&v) {
            *x -= proj * vi;
        }
    }
    Ok(out)
}

/// Collapses the first `j` directions of a basis sequentially.
pub fn collapse_top(
    frames: &EmbeddingMatrix,
    basis: &SubspaceBasis,
    j: usize,
) -> Result<EmbeddingMatrix> {
    if j > basis.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot collapse {j} directions from a basis of {}",
            basis.len()
        )));
    }
    let mut out = frames.clone();
    for i in 0..j {
        out = collapse(&out, basis.direction(i))?;
    }
    Ok(out)
}
