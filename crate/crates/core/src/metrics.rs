//! Clustering and matching evaluation against reference labels: phone
//! purity, cluster purity, frame and type phone error rates, and
//! nearest-neighbor tables.

use crate::corpus::LabelSequence;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm, squared_distance, EmbeddingMatrix};

/// Cluster-by-symbol frame counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<u64>,
    n_clusters: usize,
    n_symbols: usize,
}

impl ContingencyTable {
    /// Builds a table with explicit dimensions (at least as large as the
    /// data requires), so empty clusters keep their row.
    pub fn with_dims(
        assignments: &[usize],
        reference: &[LabelSequence],
        n_clusters: usize,
        n_symbols: usize,
    ) -> Result<Self> {
        let total_ref: usize = reference.iter().map(LabelSequence::len).sum();
        if assignments.len() != total_ref {
            return Err(Error::InvalidArgument(format!(
                "{} assignments vs {} reference frames",
                assignments.len(),
                total_ref
            )));
        }
        if assignments.is_empty() {
            return Err(Error::EmptyInput("no frames to tally".into()));
        }
        let mut counts = vec![0u64; n_clusters * n_symbols];
        let refs = reference.iter().flat_map(|s| s.tokens.iter().copied());
        for (&cluster, symbol) in assignments.iter().zip(refs) {
            if cluster >= n_clusters {
                return Err(Error::InvalidArgument(format!(
                    "cluster {cluster} out of range for {n_clusters}"
                )));
            }
            if symbol >= n_symbols {
                return Err(Error::InvalidArgument(format!(
                    "symbol {symbol} out of range for {n_symbols}"
                )));
            }
            counts[cluster * n_symbols + symbol] += 1;
        }
        Ok(Self {
            counts,
            n_clusters,
            n_symbols,
        })
    }

    pub fn from_counts(counts: Vec<u64>, n_clusters: usize, n_symbols: usize) -> Result<Self> {
        if n_clusters == 0 || n_symbols == 0 || counts.len() != n_clusters * n_symbols {
            return Err(Error::InvalidArgument("bad table shape".into()));
        }
        Ok(Self {
            counts,
            n_clusters,
            n_symbols,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn count(&self, cluster: usize, symbol: usize) -> u64 {
        self.counts[cluster * self.n_symbols + symbol]
    }

    pub fn cluster_total(&self, cluster: usize) -> u64 {
        self.counts[cluster * self.n_symbols..(cluster + 1) * self.n_symbols]
            .iter()
            .sum()
    }

    pub fn symbol_total(&self, symbol: usize) -> u64 {
        (0..self.n_clusters).map(|c| self.count(c, symbol)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn transpose(&self) -> ContingencyTable {
        let mut counts = vec![0u64; self.counts.len()];
        for c in 0..self.n_clusters {
            for s in 0..self.n_symbols {
                counts[s * self.n_clusters + c] = self.count(c, s);
            }
        }
        ContingencyTable {
            counts,
            n_clusters: self.n_symbols,
            n_symbols: self.n_clusters,
        }
    }

    /// Majority symbol of a cluster, ties toward the lowest symbol ID;
    /// `None` for an empty cluster.
    pub fn majority_symbol(&self, cluster: usize) -> Option<usize> {
        let row = &self.counts[cluster * self.n_symbols..(cluster + 1) * self.n_symbols];
        let best = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        if *best.1 == 0 {
            None
        } else {
            Some(best.0)
        }
    }
}

/// Builds a table sized by the data (`max ID + 1` in each direction).
pub fn build_table(assignments: &[usize], reference: &[LabelSequence]) -> Result<ContingencyTable> {
    let n_clusters = assignments.iter().max().map_or(0, |&m| m + 1);
    let n_symbols = reference
        .iter()
        .flat_map(|s| s.tokens.iter())
        .max()
        .map_or(0, |&m| m + 1);
    if n_clusters == 0 || n_symbols == 0 {
        return Err(Error::EmptyInput("no frames to tally".into()));
    }
    ContingencyTable::with_dims(assignments, reference, n_clusters, n_symbols)
}

/// Unweighted mean over nonempty clusters of the majority-symbol fraction.
pub fn phone_purity(table: &ContingencyTable) -> Result<f64> {
    if table.total() == 0 {
        return Err(Error::EmptyInput("empty contingency table".into()));
    }
    let mut sum = 0.0;
    let mut clusters = 0usize;
    for c in 0..table.n_clusters() {
        let total = table.cluster_total(c);
        if total == 0 {
            continue;
        }
        let max = (0..table.n_symbols())
            .map(|s| table.count(c, s))
            .max()
            .unwrap();
        sum += max as f64 / total as f64;
        clusters += 1;
    }
    Ok(sum / clusters as f64)
}

/// Frame-weighted purity: majority frames over all frames.
pub fn weighted_phone_purity(table: &ContingencyTable) -> Result<f64> {
    if table.total() == 0 {
        return Err(Error::EmptyInput("empty contingency table".into()));
    }
    let majority: u64 = (0..table.n_clusters())
        .map(|c| {
            (0..table.n_symbols())
                .map(|s| table.count(c, s))
                .max()
                .unwrap_or(0)
        })
        .sum();
    Ok(majority as f64 / table.total() as f64)
}

/// Transpose counterpart of [`phone_purity`]: unweighted mean over symbols
/// with nonzero count of the max-cluster fraction.
pub fn cluster_purity(table: &ContingencyTable) -> Result<f64> {
    if table.total() == 0 {
        return Err(Error::EmptyInput("empty contingency table".into()));
    }
    let mut sum = 0.0;
    let mut symbols = 0usize;
    for s in 0..table.n_symbols() {
        let total = table.symbol_total(s);
        if total == 0 {
            continue;
        }
        let max = (0..table.n_clusters())
            .map(|c| table.count(c, s))
            .max()
            .unwrap();
        sum += max as f64 / total as f64;
        symbols += 1;
    }
    Ok(sum / symbols as f64)
}

/// Errors under per-cluster majority labeling, over all frames.
pub fn frame_per(table: &ContingencyTable) -> Result<f64> {
    Ok(1.0 - weighted_phone_purity(table)?)
}

/// Fraction of nonempty clusters whose matched symbol is not the cluster's
/// majority reference symbol.
pub fn type_per(table: &ContingencyTable, matching: &[usize]) -> Result<f64> {
    if matching.len() != table.n_clusters() {
        return Err(Error::InvalidArgument(format!(
            "matching of {} for {} clusters",
            matching.len(),
            table.n_clusters()
        )));
    }
    if table.total() == 0 {
        return Err(Error::EmptyInput("empty contingency table".into()));
    }
    let mut wrong = 0usize;
    let mut clusters = 0usize;
    for (c, &matched) in matching.iter().enumerate() {
        let Some(majority) = table.majority_symbol(c) else {
            continue;
        };
        clusters += 1;
        if matched != majority {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / clusters as f64)
}

/// All four metrics of one evaluation; values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub phone_purity: f64,
    pub cluster_purity: f64,
    pub weighted_phone_purity: f64,
    pub frame_per: f64,
    /// Absent when no matching was supplied.
    pub type_per: Option<f64>,
}

pub fn evaluate(table: &ContingencyTable, matching: Option<&[usize]>) -> Result<MetricReport> {
    Ok(MetricReport {
        phone_purity: phone_purity(table)?,
        cluster_purity: cluster_purity(table)?,
        weighted_phone_purity: weighted_phone_purity(table)?,
        frame_per: frame_per(table)?,
        type_per: matching.map(|m| type_per(table, m)).transpose()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborMetric {
    Euclidean,
    Cosine,
}

/// For each row, the `top_k` other rows ranked best-first (ascending
/// Euclidean distance or descending cosine similarity), ties toward the
/// lowest index. Returns `(index, score)` pairs where score is the ranking
/// quantity.
pub fn nearest_neighbors(
    vectors: &EmbeddingMatrix,
    top_k: usize,
    metric: NeighborMetric,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = vectors.nrows();
    if top_k == 0 || top_k >= n {
        return Err(Error::InvalidArgument(format!(
            "top_k {top_k} out of range for {n} rows"
        )));
    }
    let score = |a: &[f64], b: &[f64]| -> f64 {
        match metric {
            NeighborMetric::Euclidean => squared_distance(a, b).sqrt(),
            NeighborMetric::Cosine => {
                let na = norm(a);
                let nb = norm(b);
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot(a, b) / (na * nb)
                }
            }
        }
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut scored: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, score(vectors.row(i), vectors.row(j))))
            .collect();
        scored.sort_by(|a, b| {
            let ord = match metric {
                NeighborMetric::Euclidean => a.1.partial_cmp(&b.1).unwrap(),
                NeighborMetric::Cosine => b.1.partial_cmp(&a.1).unwrap(),
            };
            ord.then(a.0.cmp(&b.0))
        });
        scored.truncate(top_k);
        out.push(scored);
    }
    Ok(out)
}
