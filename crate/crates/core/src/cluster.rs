//! Lloyd's k-means over frame vectors, plus the random-projection quantizer
//! baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::UnigramDistribution;
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, EmbeddingMatrix, RoleTag};

/// Result of clustering: centroids, per-frame assignments, cluster mass, and
/// the inertia trace across Lloyd iterations.
#[derive(Debug, Clone)]
pub struct CentroidSet {
    pub centroids: EmbeddingMatrix,
    pub assignments: Vec<usize>,
    pub mass: UnigramDistribution,
    pub inertia: f64,
    /// Total squared distance recorded at each assignment step, in order.
    pub inertia_trace: Vec<f64>,
}

impl CentroidSet {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }
}

/// Nearest centroid per frame under squared Euclidean distance.
/// Ties break toward the lowest centroid index.
pub fn assign(frames: &EmbeddingMatrix, centroids: &EmbeddingMatrix) -> Result<Vec<usize>> {
    if frames.dim() != centroids.dim() {
        return Err(Error::InvalidArgument(format!(
            "frame dim {} does not match centroid dim {}",
            frames.dim(),
            centroids.dim()
        )));
    }
    Ok(frames
        .iter_rows()
        .map(|f| nearest(f, centroids).0)
        .collect())
}

fn nearest(frame: &[f64], centroids: &EmbeddingMatrix) -> (usize, f64) {
    let mut best = (0usize, squared_distance(frame, centroids.row(0)));
    for (i, c) in centroids.iter_rows().enumerate().skip(1) {
        let d = squared_distance(frame, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means with k-means++ seeding. `epochs` counts full Lloyd iterations
/// (assignment + update); the loop exits early at a fixed point.
pub fn kmeans(frames: &EmbeddingMatrix, k: usize, epochs: usize, seed: u64) -> Result<CentroidSet> {
    if k == 0 || k > frames.nrows() {
        return Err(Error::InvalidArgument(format!(
            "k {k} out of range for {} frames",
            frames.nrows()
        )));
    }
    if epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    let init = plus_plus_init(frames, k, seed);
    lloyd(frames, init, epochs)
}

/// Lloyd iterations from explicit initial centroids.
pub fn lloyd(
    frames: &EmbeddingMatrix,
    initial: EmbeddingMatrix,
    epochs: usize,
) -> Result<CentroidSet> {
    if initial.dim() != frames.dim() {
        return Err(Error::InvalidArgument(format!(
            "centroid dim {} does not match frame dim {}",
            initial.dim(),
            frames.dim()
        )));
    }
    if epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    let k = initial.nrows();
    let n = frames.nrows();
    let d = frames.dim();
    let mut centroids = initial;
    let mut assignments: Vec<usize> = vec![usize::MAX; n];
    let mut trace = Vec::with_capacity(epochs + 1);

    for _ in 0..epochs {
        // Assignment step.
        let mut inertia = 0.0;
        let mut dists = vec![0.0; n];
        let mut changed = false;
        for (t, f) in frames.iter_rows().enumerate() {
            let (z, dist) = nearest(f, &centroids);
            if assignments[t] != z {
                changed = true;
                assignments[t] = z;
            }
            dists[t] = dist;
            inertia += dist;
        }
        trace.push(inertia);

        // Update step: means of assigned frames.
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (t, f) in frames.iter_rows().enumerate() {
            let z = assignments[t];
            counts[z] += 1;
            for (s, v) in sums[z * d..(z + 1) * d].iter_mut().zip(f) {
                *s += v;
            }
        }
        let mut reseeded = false;
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids
                    .row_mut(c)
                    .iter_mut()
                    .zip(&sums[c * d..(c + 1) * d])
                {
                    *dst = s * inv;
                }
            } else {
                // Reseed an empty centroid to the frame farthest from its
                // assigned centroid; mark the frame so a second empty cluster
                // picks a different one.
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap().then(b.cmp(&a)))
                    .unwrap();
                centroids.row_mut(c).copy_from_slice(frames.row(far));
                dists[far] = -1.0;
                reseeded = true;
            }
        }

        if !changed && !reseeded {
            break;
        }
    }

    // Final sync: assignments, inertia, and mass against the returned
    // centroids.
    let mut inertia = 0.0;
    let mut counts = vec![0u64; k];
    for (t, f) in frames.iter_rows().enumerate() {
        let (z, dist) = nearest(f, &centroids);
        assignments[t] = z;
        counts[z] += 1;
        inertia += dist;
    }
    trace.push(inertia);

    Ok(CentroidSet {
        centroids: centroids.with_role(RoleTag::Centroids),
        assignments,
        mass: UnigramDistribution::from_counts(&counts)?,
        inertia,
        inertia_trace: trace,
    })
}

/// k-means++ seeding: first center uniform, then D^2-weighted draws.
fn plus_plus_init(frames: &EmbeddingMatrix, k: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = frames.nrows();
    let d = frames.dim();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut dists: Vec<f64> = frames
        .iter_rows()
        .map(|f| squared_distance(f, frames.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in dists.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // All remaining mass is zero (duplicate points); take the lowest
            // index not yet chosen.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (dist, f) in dists.iter_mut().zip(frames.iter_rows()) {
            let d2 = squared_distance(f, frames.row(next));
            if d2 < *dist {
                *dist = d2;
            }
        }
    }
    let mut data = Vec::with_capacity(k * d);
    for &i in &chosen {
        data.extend_from_slice(frames.row(i));
    }
    EmbeddingMatrix::new(k, d, data, RoleTag::Centroids).expect("seeded centroids are valid")
}

/// Quantizes features through a Glorot-initialized random projection against
/// a unit-Gaussian codebook. The returned centroids are the codebook itself.
pub fn random_projection_quantize(
    features: &EmbeddingMatrix,
    codebook_size: usize,
    code_dim: usize,
    seed: u64,
) -> Result<CentroidSet> {
    if codebook_size == 0 {
        return Err(Error::InvalidArgument(
            "codebook_size must be positive".into(),
        ));
    }
    if code_dim == 0 {
        return Err(Error::InvalidArgument("code_dim must be positive".into()));
    }
    let d_in = features.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Projection: uniform on +-sqrt(6 / (fan_in + fan_out)), row-major.
    let bound = (6.0 / (d_in + code_dim) as f64).sqrt();
    let projection: Vec<f64> = (0..d_in * code_dim)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
        .collect();

    // Codebook: unit Gaussian, row-major.
    let normal = StandardNormal;
    let codebook_data: Vec<f64> = (0..codebook_size * code_dim)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let codebook = EmbeddingMatrix::new(codebook_size, code_dim, codebook_data, RoleTag::Codebook)?;

    let mut assignments = Vec::with_capacity(features.nrows());
    let mut counts = vec![0u64; codebook_size];
    let mut inertia = 0.0;
    let mut projected = vec![0.0; code_dim];
    for f in features.iter_rows() {
        for (j, p) in projected.iter_mut().enumerate() {
            *p = f
                .iter()
                .enumerate()
                .map(|(i, &v)| v * projection[i * code_dim + j])
                .sum();
        }
        let (code, dist) = nearest(&projected, &codebook);
        assignments.push(code);
        counts[code] += 1;
        inertia += dist;
    }

    Ok(CentroidSet {
        centroids: codebook,
        assignments,
        mass: UnigramDistribution::from_counts(&counts)?,
        inertia,
        inertia_trace: vec![inertia],
    })
}
