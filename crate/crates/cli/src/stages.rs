//! Pipeline stages: each consumes declared inputs, writes its artifacts
//! atomically into the output directory, and appends a manifest line
//! `stage<TAB>config_hash<TAB>seed`.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use phonematch::cbow::{cbow_train, CbowConfig, PhoneEmbeddingTable};
use phonematch::cluster::{assign, kmeans, random_projection_quantize};
use phonematch::corpus::{
    expand_text, unigram_from_sequences, LabelSequence, SegmentTable, UnigramDistribution,
};
use phonematch::gw::{distance_matrices, entropic_gw, extract_matching, preprocess, procrustes};
use phonematch::matrix::{read_matrix, write_matrix, EmbeddingMatrix, RoleTag};
use phonematch::metrics::{evaluate, nearest_neighbors, ContingencyTable, NeighborMetric};
use phonematch::pseudolabel::{assign_pseudo_labels, corrupt_labels};
use phonematch::subspace::{collapse_top, correlation_grid, group_means, pca};
use phonematch::textio;

use crate::config::{stage_seed, ConfigError, PipelineConfig};

/// Report-header notes for pinned metric conventions.
const REPORT_NOTES: &[&str] = &[
    "cluster purity: per-symbol max-cluster fraction, unweighted mean (transpose of phone purity)",
    "phone purity: per-cluster majority fraction, unweighted mean; weighted variant also reported",
    "matrices are centered by their own mean before analysis",
];

#[derive(Debug)]
pub enum CliError {
    /// A required input file does not exist (exit code 2).
    MissingInput(PathBuf),
    /// Configuration or validation problem (exit code 3).
    Invalid(String),
    /// Numerical failure inside a solver (exit code 4).
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::MissingInput(p) => write!(f, "missing input: {}", p.display()),
            CliError::Invalid(m) => write!(f, "{m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<phonematch::Error> for CliError {
    fn from(e: phonematch::Error) -> Self {
        match e {
            phonematch::Error::Numerical { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub type StageResult = Result<(), CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Collapse,
    Kmeans,
    Randproj,
    Cbow,
    Match,
    Procrustes,
    Label,
    Corrupt,
    Evaluate,
    Neighbors,
}

/// The default end-to-end pipeline, in execution order.
pub const PIPELINE: &[Stage] = &[
    Stage::Collapse,
    Stage::Kmeans,
    Stage::Cbow,
    Stage::Match,
    Stage::Label,
    Stage::Evaluate,
];

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Collapse => "collapse",
            Stage::Kmeans => "kmeans",
            Stage::Randproj => "randproj",
            Stage::Cbow => "cbow",
            Stage::Match => "match",
            Stage::Procrustes => "procrustes",
            Stage::Label => "label",
            Stage::Corrupt => "corrupt",
            Stage::Evaluate => "evaluate",
            Stage::Neighbors => "neighbors",
        }
    }

    /// Artifacts this stage writes into the output directory.
    pub fn outputs(&self, out_dir: &Path) -> Vec<PathBuf> {
        let names: &[&str] = match self {
            Stage::Collapse => &["collapsed.emb", "nuisance.emb", "collapse_report.tsv"],
            Stage::Kmeans => &["centroids.emb", "assignments.labels"],
            Stage::Randproj => &["rp_codebook.emb", "rp_assignments.labels"],
            Stage::Cbow => &[
                "cbow_in.emb",
                "cbow_out.emb",
                "cbow_alphabet.txt",
                "phones.labels",
            ],
            Stage::Match => &["coupling.emb", "matching.tsv", "objective.tsv"],
            Stage::Procrustes => &["alignment.emb", "projected.emb"],
            Stage::Label => &["pseudo.labels"],
            Stage::Corrupt => &["corrupted.labels"],
            Stage::Evaluate => &["report.tsv", "report.txt"],
            Stage::Neighbors => &["neighbors.tsv"],
        };
        names.iter().map(|n| out_dir.join(n)).collect()
    }
}

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingInput(path))
    }
}

/// Context shared by every stage invocation.
pub struct Runner<'a> {
    pub cfg: &'a PipelineConfig,
    pub out_dir: &'a Path,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a PipelineConfig, out_dir: &'a Path) -> Self {
        Self { cfg, out_dir }
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn input(&self, key: &str) -> Result<PathBuf, CliError> {
        require(self.cfg.path(key)?)
    }

    /// The embeddings feeding match/procrustes/neighbors: the cbow stage
    /// artifact (honoring `cbow_vectors`) or an explicit path.
    fn embeddings(&self) -> Result<EmbeddingMatrix, CliError> {
        match self.cfg.get("embeddings") {
            "cbow" => {
                let input = read_matrix(&require(self.artifact("cbow_in.emb"))?)?;
                match self.cfg.get("cbow_vectors") {
                    "input" => Ok(input.with_role(RoleTag::PhoneEmbeddings)),
                    "output" => {
                        let output = read_matrix(&require(self.artifact("cbow_out.emb"))?)?;
                        Ok(output.with_role(RoleTag::PhoneEmbeddings))
                    }
                    "sum" => {
                        let output = read_matrix(&require(self.artifact("cbow_out.emb"))?)?;
                        let table = PhoneEmbeddingTable {
                            alphabet: (0..input.nrows()).map(|i| i.to_string()).collect(),
                            input_vectors: input,
                            output_vectors: output,
                        };
                        Ok(table.summed_vectors())
                    }
                    other => Err(CliError::Invalid(format!(
                        "cbow_vectors must be input|output|sum, got `{other}`"
                    ))),
                }
            }
            path => {
                let resolved = require(self.cfg.resolve(path))?;
                Ok(read_matrix(&resolved)?.with_role(RoleTag::PhoneEmbeddings))
            }
        }
    }

    fn alphabet(&self) -> Result<Vec<String>, CliError> {
        let path = match self.cfg.get("alphabet") {
            "cbow" => require(self.artifact("cbow_alphabet.txt"))?,
            path => require(self.cfg.resolve(path))?,
        };
        Ok(textio::read_alphabet(&path)?)
    }

    fn seed_for(&self, stage: Stage) -> Result<u64, CliError> {
        Ok(stage_seed(self.cfg.seed()?, stage.name()))
    }

    fn append_manifest(&self, stage: Stage) -> StageResult {
        let path = self.artifact("manifest.tsv");
        let line = format!(
            "{}\t{}\t{}\n",
            stage.name(),
            self.cfg.hash(),
            self.cfg.seed()?
        );
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::Invalid(format!("cannot open {}: {e}", path.display())))?;
        file.write_all(line.as_bytes())
            .map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn run(&self, stage: Stage) -> StageResult {
        std::fs::create_dir_all(self.out_dir).map_err(|e| {
            CliError::Invalid(format!("cannot create {}: {e}", self.out_dir.display()))
        })?;
        match stage {
            Stage::Collapse => self.run_collapse()?,
            Stage::Kmeans => self.run_kmeans()?,
            Stage::Randproj => self.run_randproj()?,
            Stage::Cbow => self.run_cbow()?,
            Stage::Match => self.run_match()?,
            Stage::Procrustes => self.run_procrustes()?,
            Stage::Label => self.run_label()?,
            Stage::Corrupt => self.run_corrupt()?,
            Stage::Evaluate => self.run_evaluate()?,
            Stage::Neighbors => self.run_neighbors()?,
        }
        self.append_manifest(stage)
    }

    /// Runs the standard pipeline, resuming at the first stage whose
    /// artifacts are missing; everything after that point re-runs.
    pub fn run_pipeline(&self) -> StageResult {
        let first_missing = PIPELINE
            .iter()
            .position(|s| s.outputs(self.out_dir).iter().any(|p| !p.exists()))
            .unwrap_or(PIPELINE.len());
        for stage in &PIPELINE[first_missing..] {
            self.run(*stage)?;
        }
        Ok(())
    }

    fn read_frames_and_segments(&self) -> Result<(EmbeddingMatrix, SegmentTable), CliError> {
        let frames = read_matrix(&self.input("frames")?)?;
        let segments = textio::read_segments(&self.input("segments")?)?;
        if segments.total_frames() != frames.nrows() {
            return Err(CliError::Invalid(format!(
                "segments cover {} frames but the matrix has {}",
                segments.total_frames(),
                frames.nrows()
            )));
        }
        Ok((frames, segments))
    }

    fn run_collapse(&self) -> StageResult {
        let (frames, segments) = self.read_frames_and_segments()?;
        let j = self.cfg.get_usize("collapse_j")?;
        if j == 0 {
            return Err(CliError::Invalid("collapse_j must be at least 1".into()));
        }
        let utt_means = group_means(&frames, &segments.frame_groups())?;
        let top = j.max(10).min(utt_means.nrows().min(utt_means.dim()));
        if top < j {
            return Err(CliError::Invalid(format!(
                "cannot collapse {j} directions from {} utterance means",
                utt_means.nrows()
            )));
        }
        let basis = pca(&utt_means, top)?;
        let collapsed = collapse_top(&frames, &basis, j)?;

        write_matrix(&self.artifact("collapsed.emb"), &collapsed)?;
        let nuisance = EmbeddingMatrix::from_rows(
            (0..j).map(|i| basis.direction(i).to_vec()).collect(),
            RoleTag::Frames,
        )?;
        write_matrix(&self.artifact("nuisance.emb"), &nuisance)?;

        let mut report = String::from("# utterance-mean principal directions\n");
        report.push_str("# matrices are centered by their own mean before analysis\n");
        report.push_str("rank\teigenvalue\tcollapsed\n");
        for (i, ev) in basis.eigenvalues.iter().enumerate() {
            report.push_str(&format!("{i}\t{ev}\t{}\n", i < j));
        }
        phonematch::matrix::write_atomic(&self.artifact("collapse_report.tsv"), report.as_bytes())?;

        // With speaker segments available, also emit the agreement grid
        // between speaker-mean and utterance-mean directions.
        if !self.cfg.get("speakers").is_empty() {
            let speakers = textio::read_segments(&self.input("speakers")?)?;
            if speakers.total_frames() != frames.nrows() {
                return Err(CliError::Invalid(format!(
                    "speaker segments cover {} frames but the matrix has {}",
                    speakers.total_frames(),
                    frames.nrows()
                )));
            }
            let spk_means = group_means(&frames, &speakers.frame_groups())?;
            let spk_top = top.min(spk_means.nrows().min(spk_means.dim()));
            let spk_basis = pca(&spk_means, spk_top)?;
            let grid_top = spk_top.min(basis.len()).min(20);
            let grid = correlation_grid(&spk_basis, &basis, grid_top)?;
            textio::write_grid_tsv(
                &self.artifact("speaker_utterance_grid.tsv"),
                &grid,
                &["abs dot products: speaker-mean directions (rows) vs utterance-mean (cols)"],
            )?;
        }
        Ok(())
    }

    fn kmeans_input(&self) -> Result<EmbeddingMatrix, CliError> {
        match self.cfg.get("kmeans_input") {
            "collapsed" => Ok(read_matrix(&require(self.artifact("collapsed.emb"))?)?),
            "frames" => Ok(read_matrix(&self.input("frames")?)?),
            path => Ok(read_matrix(&require(self.cfg.resolve(path))?)?),
        }
    }

    fn run_kmeans(&self) -> StageResult {
        let frames = self.kmeans_input()?;
        let segments = textio::read_segments(&self.input("segments")?)?;
        if segments.total_frames() != frames.nrows() {
            return Err(CliError::Invalid(format!(
                "segments cover {} frames but the matrix has {}",
                segments.total_frames(),
                frames.nrows()
            )));
        }
        let k = self.cfg.get_usize("k")?;
        let epochs = self.cfg.get_usize("kmeans_epochs")?;
        let cs = kmeans(&frames, k, epochs, self.seed_for(Stage::Kmeans)?)?;
        write_matrix(&self.artifact("centroids.emb"), &cs.centroids)?;
        let seqs = slice_by_segments(&cs.assignments, &segments, k)?;
        textio::write_numeric_labels(&self.artifact("assignments.labels"), &seqs)?;
        Ok(())
    }

    fn run_randproj(&self) -> StageResult {
        let (frames, segments) = self.read_frames_and_segments()?;
        let codebook_size = self.cfg.get_usize("codebook_size")?;
        let code_dim = self.cfg.get_usize("code_dim")?;
        let cs = random_projection_quantize(
            &frames,
            codebook_size,
            code_dim,
            self.seed_for(Stage::Randproj)?,
        )?;
        write_matrix(&self.artifact("rp_codebook.emb"), &cs.centroids)?;
        let seqs = slice_by_segments(&cs.assignments, &segments, codebook_size)?;
        textio::write_numeric_labels(&self.artifact("rp_assignments.labels"), &seqs)?;
        Ok(())
    }

    fn run_cbow(&self) -> StageResult {
        let corpus_path = self.input("corpus")?;
        let lexicon = textio::read_lexicon(&self.input("lexicon")?)?;
        let lines = textio::read_text_corpus(&corpus_path)?;
        let mut phones = Vec::with_capacity(lines.len());
        for (id, words) in &lines {
            phones.push(expand_text(id, words, &lexicon)?);
        }
        let cfg = CbowConfig {
            dim: self.cfg.get_usize("cbow_dim")?,
            window: self.cfg.get_usize("window")?,
            step_size: self.cfg.get_f64("step_size")?,
            clip_norm: self.cfg.get_f64("clip_norm")?,
            epochs: self.cfg.get_usize("cbow_epochs")?,
            seed: self.seed_for(Stage::Cbow)?,
        };
        let table = cbow_train(&phones, lexicon.alphabet(), &cfg)?;
        write_matrix(&self.artifact("cbow_in.emb"), &table.input_vectors)?;
        write_matrix(&self.artifact("cbow_out.emb"), &table.output_vectors)?;
        textio::write_alphabet(&self.artifact("cbow_alphabet.txt"), &table.alphabet)?;
        textio::write_labels(&self.artifact("phones.labels"), &phones, lexicon.alphabet())?;
        Ok(())
    }

    fn q_distribution(
        &self,
        m: usize,
        alphabet: &[String],
    ) -> Result<UnigramDistribution, CliError> {
        match self.cfg.get("q_source") {
            "uniform" => Ok(UnigramDistribution::uniform(m)?),
            "phones" => {
                let seqs =
                    textio::read_labels(&require(self.artifact("phones.labels"))?, alphabet)?;
                Ok(unigram_from_sequences(&seqs, m)?)
            }
            path => {
                let seqs = textio::read_labels(&require(self.cfg.resolve(path))?, alphabet)?;
                Ok(unigram_from_sequences(&seqs, m)?)
            }
        }
    }

    fn run_match(&self) -> StageResult {
        let centroids = read_matrix(&require(self.artifact("centroids.emb"))?)?;
        let embeddings = self.embeddings()?;
        let alphabet = self.alphabet()?;
        if alphabet.len() != embeddings.nrows() {
            return Err(CliError::Invalid(format!(
                "alphabet of {} symbols does not match {} embeddings",
                alphabet.len(),
                embeddings.nrows()
            )));
        }
        let k = centroids.nrows();
        let assignment_seqs =
            textio::read_numeric_labels(&require(self.artifact("assignments.labels"))?, k)?;
        let p = unigram_from_sequences(&assignment_seqs, k)?;
        let q = self.q_distribution(embeddings.nrows(), &alphabet)?;

        let dp = distance_matrices(
            &maybe_preprocess(&centroids)?,
            &maybe_preprocess(&embeddings)?,
        );
        let coupling = entropic_gw(
            &dp,
            &p,
            &q,
            self.cfg.epsilon()?,
            self.cfg.get_usize("outer_iterations")?,
            self.cfg.get_usize("inner_iterations")?,
            self.seed_for(Stage::Match)?,
        )?;
        let matching = extract_matching(&coupling);

        write_matrix(&self.artifact("coupling.emb"), &coupling.gamma)?;
        textio::write_matching_tsv(&self.artifact("matching.tsv"), &matching, &alphabet)?;
        textio::write_trace_tsv(&self.artifact("objective.tsv"), &coupling.objective_trace)?;
        Ok(())
    }

    fn run_procrustes(&self) -> StageResult {
        let centroids = read_matrix(&require(self.artifact("centroids.emb"))?)?;
        let embeddings = self.embeddings()?;
        let gamma = read_matrix(&require(self.artifact("coupling.emb"))?)?;
        let k = centroids.nrows();
        let assignment_seqs =
            textio::read_numeric_labels(&require(self.artifact("assignments.labels"))?, k)?;
        let p = unigram_from_sequences(&assignment_seqs, k)?;
        let q = self.q_distribution(embeddings.nrows(), &self.alphabet()?)?;
        let centroids_p = maybe_preprocess(&centroids)?;
        let embeddings_p = maybe_preprocess(&embeddings)?;
        let coupling = phonematch::gw::CouplingMatrix {
            gamma,
            p,
            q,
            epsilon: self.cfg.epsilon()?,
            iterations_run: 0,
            objective_trace: vec![],
        };
        let map = procrustes(&centroids_p, &embeddings_p, &coupling)?;
        write_matrix(&self.artifact("alignment.emb"), &map.a)?;
        let projected = map.project_matrix(&centroids_p)?;
        write_matrix(&self.artifact("projected.emb"), &projected)?;
        Ok(())
    }

    fn run_label(&self) -> StageResult {
        let alphabet = self.alphabet()?;
        let matching =
            textio::read_matching_tsv(&require(self.artifact("matching.tsv"))?, &alphabet)?;
        let assignment_seqs = textio::read_numeric_labels(
            &require(self.artifact("assignments.labels"))?,
            matching.len(),
        )?;
        let shift_k = self.cfg.get_usize("shift_k")?;
        let mut out = Vec::with_capacity(assignment_seqs.len());
        for seq in &assignment_seqs {
            out.push(assign_pseudo_labels(
                &seq.utterance_id,
                &seq.tokens,
                &matching,
                shift_k,
            )?);
        }
        textio::write_pseudo_labels(&self.artifact("pseudo.labels"), &out, &alphabet)?;
        Ok(())
    }

    fn run_corrupt(&self) -> StageResult {
        let alphabet = self.alphabet()?;
        let input = match self.cfg.get("corrupt_input") {
            "" => require(self.artifact("pseudo.labels"))?,
            path => require(self.cfg.resolve(path))?,
        };
        let labels = textio::read_pseudo_labels(&input, &alphabet)?;
        let m = alphabet.len();
        let unigram = match self.cfg.get("corrupt_unigram") {
            "uniform" => UnigramDistribution::uniform(m)?,
            "phones" => {
                let seqs =
                    textio::read_labels(&require(self.artifact("phones.labels"))?, &alphabet)?;
                unigram_from_sequences(&seqs, m)?
            }
            "input" => {
                let seqs: Vec<LabelSequence> = labels
                    .iter()
                    .map(|l| LabelSequence::new(l.utterance_id.clone(), l.labels.clone(), m))
                    .collect::<Result<_, _>>()?;
                unigram_from_sequences(&seqs, m)?
            }
            other => {
                return Err(CliError::Invalid(format!(
                    "corrupt_unigram must be phones|input|uniform, got `{other}`"
                )))
            }
        };
        let percent = self.cfg.get_f64("percent")?;
        let base_seed = self.seed_for(Stage::Corrupt)?;
        let mut out = Vec::with_capacity(labels.len());
        for (idx, seq) in labels.iter().enumerate() {
            let seed = stage_seed(base_seed, &format!("utt{idx}"));
            out.push(corrupt_labels(seq, percent, &unigram, seed)?);
        }
        textio::write_pseudo_labels(&self.artifact("corrupted.labels"), &out, &alphabet)?;
        Ok(())
    }

    fn run_evaluate(&self) -> StageResult {
        let alphabet = self.alphabet()?;
        let centroids = read_matrix(&require(self.artifact("centroids.emb"))?)?;
        let k = centroids.nrows();
        let assignment_seqs =
            textio::read_numeric_labels(&require(self.artifact("assignments.labels"))?, k)?;
        let refs = textio::read_labels(&self.input("refs")?, &alphabet)?;
        let assignments: Vec<usize> = assignment_seqs
            .iter()
            .flat_map(|s| s.tokens.iter().copied())
            .collect();
        let table = ContingencyTable::with_dims(&assignments, &refs, k, alphabet.len())?;
        let matching_path = self.artifact("matching.tsv");
        let matching = if matching_path.exists() {
            Some(textio::read_matching_tsv(&matching_path, &alphabet)?)
        } else {
            None
        };
        let report = evaluate(&table, matching.as_deref())?;
        textio::write_report_tsv(&self.artifact("report.tsv"), &report, REPORT_NOTES)?;
        let text = textio::render_report_text(&report, REPORT_NOTES);
        phonematch::matrix::write_atomic(&self.artifact("report.txt"), text.as_bytes())?;
        Ok(())
    }

    fn run_neighbors(&self) -> StageResult {
        let vectors = match self.cfg.get("neighbors_input") {
            "embeddings" => self.embeddings()?,
            path => read_matrix(&require(self.cfg.resolve(path))?)?,
        };
        let names = self.alphabet()?;
        if names.len() != vectors.nrows() {
            return Err(CliError::Invalid(format!(
                "alphabet of {} symbols does not match {} vectors",
                names.len(),
                vectors.nrows()
            )));
        }
        let top = self.cfg.get_usize("neighbors_top")?;
        let metric = match self.cfg.get("neighbors_metric") {
            "euclidean" => NeighborMetric::Euclidean,
            "cosine" => NeighborMetric::Cosine,
            other => {
                return Err(CliError::Invalid(format!(
                    "neighbors_metric must be euclidean|cosine, got `{other}`"
                )))
            }
        };
        let nn = nearest_neighbors(&vectors, top, metric)?;
        textio::write_neighbors_tsv(
            &self.artifact("neighbors.tsv"),
            &names,
            &nn,
            self.cfg.get("neighbors_metric"),
        )?;
        Ok(())
    }
}

/// Center-and-normalize, passing single-row matrices through unchanged (a
/// one-point space has a trivial distance matrix; preprocessing needs at
/// least two rows).
fn maybe_preprocess(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix, CliError> {
    if m.nrows() >= 2 {
        Ok(preprocess(m)?)
    } else {
        Ok(m.clone())
    }
}

/// Splits a flat assignment list back into per-utterance label sequences.
fn slice_by_segments(
    assignments: &[usize],
    segments: &SegmentTable,
    alphabet_size: usize,
) -> Result<Vec<LabelSequence>, CliError> {
    let mut out = Vec::with_capacity(segments.entries().len());
    for (id, start, len) in segments.ranges() {
        out.push(LabelSequence::new(
            id,
            assignments[start..start + len].to_vec(),
            alphabet_size,
        )?);
    }
    Ok(out)
}

/// Verifies an assignment stage's nearest-centroid contract, used by tests:
/// re-assigning against the persisted centroids reproduces the label file.
pub fn verify_assignments(out_dir: &Path) -> Result<bool, CliError> {
    let centroids = read_matrix(&require(out_dir.join("centroids.emb"))?)?;
    let collapsed = read_matrix(&require(out_dir.join("collapsed.emb"))?)?;
    let seqs = textio::read_numeric_labels(
        &require(out_dir.join("assignments.labels"))?,
        centroids.nrows(),
    )?;
    let flat: Vec<usize> = seqs.iter().flat_map(|s| s.tokens.iter().copied()).collect();
    Ok(assign(&collapsed, &centroids)? == flat)
}
