//! Per-frame pseudo-labels from a matching, reference implementations of the
//! prediction losses an external trainer would add, and label corruption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cbow::PhoneEmbeddingTable;
use crate::corpus::UnigramDistribution;
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;

/// Where a label sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Matching,
    ForcedAlignment,
    Corrupted,
    RandomProjection,
}

impl LabelSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelSource::Matching => "matching",
            LabelSource::ForcedAlignment => "forced_alignment",
            LabelSource::Corrupted => "corrupted",
            LabelSource::RandomProjection => "random_projection",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "matching" => Some(LabelSource::Matching),
            "forced_alignment" => Some(LabelSource::ForcedAlignment),
            "corrupted" => Some(LabelSource::Corrupted),
            "random_projection" => Some(LabelSource::RandomProjection),
            _ => None,
        }
    }
}

/// Per-frame symbol IDs for one utterance, with provenance and the time
/// shift `k` an external trainer should apply to the targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabelSequence {
    pub utterance_id: String,
    pub labels: Vec<usize>,
    pub source: LabelSource,
    pub shift_k: usize,
}

/// Which loss a probe matrix parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    MeanSquaredError,
}

/// Linear probe `W` (`d_in x d_out`, logits or regression output are
/// `h_t W`).
#[derive(Debug, Clone)]
pub struct LossProbe {
    pub weights: EmbeddingMatrix,
    pub kind: LossKind,
}

impl LossProbe {
    pub fn d_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weights.dim()
    }
}

/// Composes cluster assignments with a matching: `labels[t] =
/// matching[assignments[t]]`.
pub fn assign_pseudo_labels(
    utterance_id: &str,
    assignments: &[usize],
    matching: &[usize],
    shift_k: usize,
) -> Result<PseudoLabelSequence> {
    if assignments.is_empty() {
        return Err(Error::EmptyInput("no assignments".into()));
    }
    let labels = assignments
        .iter()
        .map(|&z| {
            matching.get(z).copied().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "cluster {z} out of range for matching of {}",
                    matching.len()
                ))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(PseudoLabelSequence {
        utterance_id: utterance_id.to_string(),
        labels,
        source: LabelSource::Matching,
        shift_k,
    })
}

fn check_shift(frames: &EmbeddingMatrix, labels: &PseudoLabelSequence, k: usize) -> Result<usize> {
    let t_len = frames.nrows();
    if labels.labels.len() != t_len {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} frames",
            labels.labels.len(),
            t_len
        )));
    }
    if t_len <= k {
        return Err(Error::InvalidArgument(format!(
            "sequence of {t_len} frames is too short for shift {k}"
        )));
    }
    Ok(t_len - k)
}

/// Mean shifted cross-entropy: `-log softmax(h_t W)[s_{t+k}]` averaged over
/// `t`.
pub fn ce_loss(
    frames: &EmbeddingMatrix,
    labels: &PseudoLabelSequence,
    probe: &LossProbe,
    k: usize,
) -> Result<f64> {
    ce_loss_with_grad(frames, labels, probe, k).map(|(loss, _)| loss)
}

/// Cross-entropy plus its gradient with respect to the probe weights, so an
/// external trainer can fold the loss into its objective.
pub fn ce_loss_with_grad(
    frames: &EmbeddingMatrix,
    labels: &PseudoLabelSequence,
    probe: &LossProbe,
    k: usize,
) -> Result<(f64, EmbeddingMatrix)> {
    if probe.kind != LossKind::CrossEntropy {
        return Err(Error::InvalidArgument(
            "probe kind must be cross_entropy".into(),
        ));
    }
    if probe.d_in() != frames.dim() {
        return Err(Error::InvalidArgument(format!(
            "probe d_in {} vs frame dim {}",
            probe.d_in(),
            frames.dim()
        )));
    }
    let count = check_shift(frames, labels, k)?;
    let m = probe.d_out();
    if let Some(&bad) = labels.labels.iter().find(|&&s| s >= m) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {m} outputs"
        )));
    }

    let d = frames.dim();
    let mut grad = vec![0.0; d * m];
    let mut total = 0.0;
    let mut logits = vec![0.0; m];
    for t in 0..count {
        let h = frames.row(t);
        let target = labels.labels[t + k];
        for (j, l) in logits.iter_mut().enumerate() {
            *l = (0..d).map(|i| h[i] * probe.weights.get(i, j)).sum();
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            z += *l;
        }
        total += -(logits[target] / z).ln();
        for (j, l) in logits.iter().enumerate() {
            let delta = l / z - if j == target { 1.0 } else { 0.0 };
            for (i, &hv) in h.iter().enumerate() {
                grad[i * m + j] += delta * hv;
            }
        }
    }
    let inv = 1.0 / count as f64;
    total *= inv;
    for g in grad.iter_mut() {
        *g *= inv;
    }
    Ok((
        total,
        EmbeddingMatrix::new(d, m, grad, probe.weights.role())?,
    ))
}

/// Mean shifted regression loss `||y_{s_{t+k}} - h_t W||^2` against the
/// embedding looked up with the pseudo-label.
pub fn mse_loss(
    frames: &EmbeddingMatrix,
    labels: &PseudoLabelSequence,
    table: &PhoneEmbeddingTable,
    probe: &LossProbe,
    k: usize,
) -> Result<f64> {
    mse_loss_with_grad(frames, labels, table, probe, k).map(|(loss, _)| loss)
}

pub fn mse_loss_with_grad(
    frames: &EmbeddingMatrix,
    labels: &PseudoLabelSequence,
    table: &PhoneEmbeddingTable,
    probe: &LossProbe,
    k: usize,
) -> Result<(f64, EmbeddingMatrix)> {
    if probe.kind != LossKind::MeanSquaredError {
        return Err(Error::InvalidArgument(
            "probe kind must be mean_squared_error".into(),
        ));
    }
    if probe.d_in() != frames.dim() {
        return Err(Error::InvalidArgument(format!(
            "probe d_in {} vs frame dim {}",
            probe.d_in(),
            frames.dim()
        )));
    }
    if probe.d_out() != table.dim() {
        return Err(Error::InvalidArgument(format!(
            "probe d_out {} vs embedding dim {}",
            probe.d_out(),
            table.dim()
        )));
    }
    let count = check_shift(frames, labels, k)?;
    let m = table.alphabet_size();
    if let Some(&bad) = labels.labels.iter().find(|&&s| s >= m) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for table of {m}"
        )));
    }

    let d = frames.dim();
    let e = table.dim();
    let mut grad = vec![0.0; d * e];
    let mut total = 0.0;
    let mut pred = vec![0.0; e];
    for t in 0..count {
        let h = frames.row(t);
        let target = table.input_vectors.row(labels.labels[t + k]);
        for (j, pv) in pred.iter_mut().enumerate() {
            *pv = (0..d).map(|i| h[i] * probe.weights.get(i, j)).sum();
        }
        for j in 0..e {
            let residual = pred[j] - target[j];
            total += residual * residual;
            // d/dW_ij of (h W - y)_j^2 = 2 (pred_j - y_j) h_i
            for (i, &hv) in h.iter().enumerate() {
                grad[i * e + j] += 2.0 * residual * hv;
            }
        }
    }
    let inv = 1.0 / count as f64;
    total *= inv;
    for g in grad.iter_mut() {
        *g *= inv;
    }
    Ok((
        total,
        EmbeddingMatrix::new(d, e, grad, probe.weights.role())?,
    ))
}

/// Pooled cross-entropy over several utterances: positions from every
/// `(frames, labels)` pair contribute equally, so the result does not
/// depend on utterance order.
pub fn ce_loss_corpus(
    pairs: &[(&EmbeddingMatrix, &PseudoLabelSequence)],
    probe: &LossProbe,
    k: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no utterances".into()));
    }
    let mut total = 0.0;
    let mut positions = 0usize;
    for (frames, labels) in pairs {
        let count = check_shift(frames, labels, k)?;
        total += ce_loss(frames, labels, probe, k)? * count as f64;
        positions += count;
    }
    Ok(total / positions as f64)
}

/// Pooled regression loss over several utterances; see [`ce_loss_corpus`].
pub fn mse_loss_corpus(
    pairs: &[(&EmbeddingMatrix, &PseudoLabelSequence)],
    table: &PhoneEmbeddingTable,
    probe: &LossProbe,
    k: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no utterances".into()));
    }
    let mut total = 0.0;
    let mut positions = 0usize;
    for (frames, labels) in pairs {
        let count = check_shift(frames, labels, k)?;
        total += mse_loss(frames, labels, table, probe, k)? * count as f64;
        positions += count;
    }
    Ok(total / positions as f64)
}

/// Independently corrupts each position with probability `percent/100`,
/// resampling from `unigram` (a resample may coincide with the original).
///
/// The selection mask and the replacement draws use separate streams of the
/// seeded generator, so the mask depends only on `(seed, length, percent)`.
pub fn corrupt_labels(
    labels: &PseudoLabelSequence,
    percent: f64,
    unigram: &UnigramDistribution,
    seed: u64,
) -> Result<PseudoLabelSequence> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::InvalidArgument(format!(
            "percent {percent} outside [0, 100]"
        )));
    }
    if let Some(&bad) = labels.labels.iter().find(|&&s| s >= unigram.len()) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for unigram of {}",
            unigram.len()
        )));
    }
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
    mask_rng.set_stream(0);
    let mut draw_rng = ChaCha8Rng::seed_from_u64(seed);
    draw_rng.set_stream(1);

    let threshold = percent / 100.0;
    let out = labels
        .labels
        .iter()
        .map(|&orig| {
            if mask_rng.random::<f64>() < threshold {
                sample_unigram(unigram, &mut draw_rng)
            } else {
                orig
            }
        })
        .collect();
    Ok(PseudoLabelSequence {
        utterance_id: labels.utterance_id.clone(),
        labels: out,
        source: LabelSource::Corrupted,
        shift_k: labels.shift_k,
    })
}

fn sample_unigram(unigram: &UnigramDistribution, rng: &mut ChaCha8Rng) -> usize {
    let mut u = rng.random::<f64>();
    for (i, &w) in unigram.weights().iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Float round-off at the tail: return the last symbol with mass.
    unigram
        .weights()
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(unigram.len() - 1)
}
