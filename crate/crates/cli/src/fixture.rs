//! Synthetic fixture generation.
//!
//! Both fixtures render frames as an isometric copy of the symbol
//! embeddings: embeddings in dimension `d` are zero-padded into `d + 1`
//! dimensions and rotated by a random orthogonal matrix, so the spare axis
//! (the image of the padding axis) is exactly orthogonal to every centroid
//! difference. Per-utterance offsets run along that axis, which is what the
//! collapse stage is there to remove; after collapsing, the centroid
//! geometry is an exact permuted isometry of the embeddings, so matching
//! should label every cluster correctly (type PER 0) and evaluation closes
//! the loop.
//!
//! - The `matching` fixture supplies ready-made Gaussian embeddings and a
//!   config that skips CBOW (`embeddings = embeddings.emb`, `q_source =
//!   uniform`), with every utterance containing exactly two frames per
//!   phone.
//! - The `pipeline` fixture supplies a word corpus and lexicon, trains CBOW
//!   with the same derived seed the pipeline's own cbow stage will use, and
//!   renders frames around the *learned* embeddings; determinism makes the
//!   pipeline reproduce the same table bit-for-bit. Every utterance is a
//!   shuffled copy of one fixed word bag, so utterance means differ only by
//!   the offset axis.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use phonematch::cbow::{cbow_train, CbowConfig};
use phonematch::corpus::{expand_text, LabelSequence, Lexicon, SegmentTable};
use phonematch::matrix::{dot, norm, squared_distance, write_matrix, EmbeddingMatrix, RoleTag};
use phonematch::textio;

use crate::config::{stage_seed, PipelineConfig};
use crate::stages::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    Pipeline,
    Matching,
}

/// Frame noise around each rendered centroid.
const NOISE_SIGMA: f64 = 0.05;
/// Minimum pairwise centroid separation after scaling.
const TARGET_SEPARATION: f64 = 60.0;
/// Per-utterance offset scale along the protected axis.
const OFFSET_SIGMA: f64 = 30.0;

/// Generates a fixture into `dir` and returns the path of the written
/// config file.
pub fn generate(dir: &Path, kind: FixtureKind, seed: u64) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Invalid(format!("cannot create {}: {e}", dir.display())))?;
    match kind {
        FixtureKind::Matching => generate_matching(dir, seed),
        FixtureKind::Pipeline => generate_pipeline(dir, seed),
    }
}

/// Random orthogonal matrix by Gram-Schmidt on Gaussian rows, row-major.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = StandardNormal;
    loop {
        let mut rows: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..d).map(|_| normal.sample(rng)).collect())
            .collect();
        let mut ok = true;
        for i in 0..d {
            for j in 0..i {
                let proj = dot(&rows[i], &rows[j]);
                let prev = rows[j].clone();
                for (x, p) in rows[i].iter_mut().zip(&prev) {
                    *x -= proj * p;
                }
            }
            let len = norm(&rows[i]);
            if len < 1e-8 {
                ok = false;
                break;
            }
            for x in rows[i].iter_mut() {
                *x /= len;
            }
        }
        if ok {
            return rows.into_iter().flatten().collect();
        }
    }
}

/// Rotates zero-padded embeddings into frame space, scaled so the minimum
/// pairwise separation is [`TARGET_SEPARATION`]. Returns the centroids (one
/// per symbol) and the protected offset axis.
fn render_centroids(
    embeddings: &EmbeddingMatrix,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = embeddings.nrows();
    let d = embeddings.dim();
    let frame_dim = d + 1;
    let q = random_orthogonal(frame_dim, rng);

    let mut min_dist = f64::INFINITY;
    for i in 0..m {
        for j in (i + 1)..m {
            min_dist = min_dist.min(squared_distance(embeddings.row(i), embeddings.row(j)).sqrt());
        }
    }
    let scale = TARGET_SEPARATION / min_dist;

    let centroids: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let y = embeddings.row(i);
            (0..frame_dim)
                .map(|r| {
                    // padded coordinate d is zero; only the first d columns
                    // of Q contribute.
                    scale * (0..d).map(|k| q[r * frame_dim + k] * y[k]).sum::<f64>()
                })
                .collect()
        })
        .collect();
    let axis: Vec<f64> = (0..frame_dim).map(|r| q[r * frame_dim + d]).collect();
    (centroids, axis)
}

/// Renders one frame per token: centroid + utterance offset + noise.
fn render_frames(
    phone_seqs: &[LabelSequence],
    centroids: &[Vec<f64>],
    axis: &[f64],
    rng: &mut ChaCha8Rng,
) -> (EmbeddingMatrix, SegmentTable) {
    let frame_dim = axis.len();
    let normal = StandardNormal;
    let mut rows = Vec::new();
    let mut segments = Vec::new();
    for seq in phone_seqs {
        let offset: f64 = {
            let g: f64 = normal.sample(rng);
            g * OFFSET_SIGMA
        };
        for &tok in &seq.tokens {
            let mut frame: Vec<f64> = centroids[tok].clone();
            for (f, a) in frame.iter_mut().zip(axis) {
                *f += offset * a;
            }
            for f in frame.iter_mut() {
                let g: f64 = normal.sample(rng);
                *f += g * NOISE_SIGMA;
            }
            rows.push(frame);
        }
        segments.push((seq.utterance_id.clone(), seq.tokens.len()));
    }
    let frames = EmbeddingMatrix::new(
        rows.len(),
        frame_dim,
        rows.into_iter().flatten().collect(),
        RoleTag::Frames,
    )
    .expect("rendered frames are finite");
    (
        frames,
        SegmentTable::new(segments).expect("non-empty fixture"),
    )
}

fn write_common(
    dir: &Path,
    frames: &EmbeddingMatrix,
    segments: &SegmentTable,
    refs: &[LabelSequence],
    alphabet: &[String],
) -> Result<(), CliError> {
    write_matrix(&dir.join("frames.emb"), frames)?;
    textio::write_segments(&dir.join("segments.txt"), segments)?;
    textio::write_labels(&dir.join("refs.labels"), refs, alphabet)?;
    Ok(())
}

fn write_config(dir: &Path, cfg: &PipelineConfig, name: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    phonematch::matrix::write_atomic(&path, cfg.render().as_bytes())?;
    Ok(path)
}

/// Gaussian embeddings, uniform phone usage, no text corpus.
fn generate_matching(dir: &Path, seed: u64) -> Result<PathBuf, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(seed, "fixture"));
    let m = 20;
    let dim = 16;
    let utterances = 50;
    let normal = StandardNormal;

    // Rejection-sample embeddings to a healthy minimum separation so the
    // matching problem has unambiguous structure.
    let embeddings = loop {
        let data: Vec<f64> = (0..m * dim).map(|_| normal.sample(&mut rng)).collect();
        let e = EmbeddingMatrix::new(m, dim, data, RoleTag::PhoneEmbeddings).unwrap();
        let mut min_dist = f64::INFINITY;
        for i in 0..m {
            for j in (i + 1)..m {
                min_dist = min_dist.min(squared_distance(e.row(i), e.row(j)).sqrt());
            }
        }
        if min_dist >= 2.5 {
            break e;
        }
    };
    let alphabet: Vec<String> = (0..m).map(|i| format!("p{i:02}")).collect();

    // Two frames per phone per utterance, order shuffled.
    let mut phone_seqs = Vec::with_capacity(utterances);
    for u in 0..utterances {
        let mut tokens: Vec<usize> = (0..m).flat_map(|p| [p, p]).collect();
        for i in (1..tokens.len()).rev() {
            let j = rng.random_range(0..=i);
            tokens.swap(i, j);
        }
        phone_seqs.push(LabelSequence::new(format!("utt{u:04}"), tokens, m).unwrap());
    }

    let (centroids, axis) = render_centroids(&embeddings, &mut rng);
    let (frames, segments) = render_frames(&phone_seqs, &centroids, &axis, &mut rng);

    write_common(dir, &frames, &segments, &phone_seqs, &alphabet)?;
    write_matrix(&dir.join("embeddings.emb"), &embeddings)?;
    textio::write_alphabet(&dir.join("alphabet.txt"), &alphabet)?;

    let mut cfg = PipelineConfig::default();
    for (k, v) in [
        ("frames", "frames.emb"),
        ("segments", "segments.txt"),
        ("refs", "refs.labels"),
        ("embeddings", "embeddings.emb"),
        ("alphabet", "alphabet.txt"),
        ("q_source", "uniform"),
        ("k", "20"),
        ("kmeans_epochs", "30"),
        ("collapse_j", "1"),
        ("epsilon", "0.005"),
    ] {
        cfg.set(k, v).expect("known fixture keys");
    }
    cfg.set("seed", &seed.to_string()).unwrap();
    write_config(dir, &cfg, "fixture.conf")
}

/// Word corpus + lexicon; embeddings come from CBOW inside the pipeline.
fn generate_pipeline(dir: &Path, seed: u64) -> Result<PathBuf, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(seed, "fixture"));
    let content_phones = 18;
    let utterances = 260;

    // Structured pronunciations: every content phone occurs in several
    // distinct word contexts, which is what CBOW needs to separate them.
    let phone_names: Vec<String> = (0..content_phones).map(|i| format!("a{i:02}")).collect();
    let mut entries: Vec<(String, Vec<String>)> = Vec::new();
    for w in 0..36usize {
        let mut phones = vec![
            phone_names[w % content_phones].clone(),
            phone_names[(2 * w + 5) % content_phones].clone(),
        ];
        if w % 3 == 0 {
            phones.push(phone_names[(3 * w + 11) % content_phones].clone());
        }
        entries.push((format!("w{w:02}"), phones));
    }
    entries.push(("__pause__".to_string(), vec!["sil".to_string()]));
    let lexicon = Lexicon::from_pronunciations(
        entries
            .iter()
            .map(|(w, ps)| (w.as_str(), ps.iter().map(String::as_str).collect())),
    )?;
    textio::write_lexicon(&dir.join("lexicon.txt"), &lexicon)?;

    // One fixed word bag per utterance (shuffled), a pause every six words,
    // and one out-of-vocabulary token to exercise the spn path. Identical
    // composition keeps utterance means apart only along the offset axis.
    let mut corpus_text = String::new();
    let mut phone_seqs = Vec::with_capacity(utterances);
    for u in 0..utterances {
        let mut bag: Vec<String> = (0..36).map(|w| format!("w{w:02}")).collect();
        bag.push("zzq".to_string());
        for i in (1..bag.len()).rev() {
            let j = rng.random_range(0..=i);
            bag.swap(i, j);
        }
        let mut words = Vec::with_capacity(bag.len() + bag.len() / 6 + 1);
        for (i, w) in bag.iter().enumerate() {
            words.push(w.clone());
            if (i + 1) % 6 == 0 {
                words.push("__pause__".to_string());
            }
        }
        let id = format!("utt{u:04}");
        corpus_text.push_str(&format!("{id} {}\n", words.join(" ")));
        phone_seqs.push(expand_text(&id, &words, &lexicon)?);
    }
    phonematch::matrix::write_atomic(&dir.join("corpus.txt"), corpus_text.as_bytes())?;

    // Train CBOW exactly as the pipeline's cbow stage will (same derived
    // seed, same hyperparameters), then render frames around the learned
    // embeddings.
    let cbow_cfg = CbowConfig {
        dim: 16,
        window: 5,
        step_size: 0.005,
        clip_norm: 5.0,
        epochs: 10,
        seed: stage_seed(seed, "cbow"),
    };
    let table = cbow_train(&phone_seqs, lexicon.alphabet(), &cbow_cfg)?;

    let (centroids, axis) = render_centroids(&table.input_vectors, &mut rng);
    let (frames, segments) = render_frames(&phone_seqs, &centroids, &axis, &mut rng);
    write_common(dir, &frames, &segments, &phone_seqs, lexicon.alphabet())?;

    let mut cfg = PipelineConfig::default();
    for (k, v) in [
        ("frames", "frames.emb"),
        ("segments", "segments.txt"),
        ("corpus", "corpus.txt"),
        ("lexicon", "lexicon.txt"),
        ("refs", "refs.labels"),
        ("k", "20"),
        ("kmeans_epochs", "30"),
        ("collapse_j", "1"),
        ("cbow_dim", "16"),
        ("cbow_epochs", "10"),
        ("epsilon", "0.005"),
    ] {
        cfg.set(k, v).expect("known fixture keys");
    }
    cfg.set("seed", &seed.to_string()).unwrap();
    write_config(dir, &cfg, "fixture.conf")
}
