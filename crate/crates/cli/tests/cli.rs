//! Stage-level behavior of the command-line pipeline: artifact contracts,
//! resume semantics, determinism, exit codes, and the auxiliary stages not
//! exercised by the default pipeline.

use std::path::Path;
use std::process::Command;

use phonematch_cli::config::PipelineConfig;
use phonematch_cli::fixture::{self, FixtureKind};
use phonematch_cli::stages::{verify_assignments, CliError, Runner, Stage};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phonematch"))
}

fn run_fixture_pipeline(dir: &Path, seed: u64) -> (tempfile::TempDir, PipelineConfig) {
    let conf = fixture::generate(dir, FixtureKind::Pipeline, seed).unwrap();
    let cfg = PipelineConfig::from_file(&conf).unwrap();
    let out = tempfile::tempdir().unwrap();
    let runner = Runner::new(&cfg, out.path());
    runner.run_pipeline().unwrap();
    (out, cfg)
}

#[test]
fn pipeline_produces_every_artifact_and_they_validate() {
    let fix = tempfile::tempdir().unwrap();
    let (out, cfg) = run_fixture_pipeline(fix.path(), 11);
    for stage in phonematch_cli::stages::PIPELINE {
        for artifact in stage.outputs(out.path()) {
            assert!(artifact.exists(), "missing {}", artifact.display());
        }
    }
    // Matrices parse and have coherent shapes.
    let centroids = phonematch::read_matrix(&out.path().join("centroids.emb")).unwrap();
    let coupling = phonematch::read_matrix(&out.path().join("coupling.emb")).unwrap();
    let embeddings = phonematch::read_matrix(&out.path().join("cbow_in.emb")).unwrap();
    assert_eq!(centroids.nrows(), cfg.get_usize("k").unwrap());
    assert_eq!(coupling.nrows(), centroids.nrows());
    assert_eq!(coupling.dim(), embeddings.nrows());
    // Assignments satisfy the nearest-centroid contract.
    assert!(verify_assignments(out.path()).unwrap());
    // No stray temp files from atomic writes.
    for entry in std::fs::read_dir(out.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(
            !name.to_string_lossy().ends_with(".tmp"),
            "leftover temp file {name:?}"
        );
    }
}

#[test]
fn pipeline_reaches_zero_type_per_on_the_fixture() {
    let fix = tempfile::tempdir().unwrap();
    let (out, _) = run_fixture_pipeline(fix.path(), 0);
    let report = std::fs::read_to_string(out.path().join("report.tsv")).unwrap();
    let value = |metric: &str| -> f64 {
        report
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{metric}\t")))
            .unwrap_or_else(|| panic!("{metric} missing from report"))
            .parse()
            .unwrap()
    };
    assert_eq!(value("type_per"), 0.0);
    assert!(value("frame_per") <= 0.02);
}

#[test]
fn reruns_are_byte_identical_via_the_binary() {
    let fix = tempfile::tempdir().unwrap();
    let conf = fixture::generate(fix.path(), FixtureKind::Matching, 5).unwrap();
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    for out in [&out_a, &out_b] {
        for stage in ["collapse", "kmeans", "match"] {
            let status = bin()
                .args([
                    stage,
                    "--config",
                    conf.to_str().unwrap(),
                    "--out-dir",
                    out.path().to_str().unwrap(),
                ])
                .status()
                .unwrap();
            assert!(status.success(), "{stage} failed");
        }
    }
    for name in [
        "collapsed.emb",
        "centroids.emb",
        "coupling.emb",
        "matching.tsv",
        "manifest.tsv",
    ] {
        let a = std::fs::read(out_a.path().join(name)).unwrap();
        let b = std::fs::read(out_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn resume_reruns_exactly_the_missing_stage_and_successors() {
    let fix = tempfile::tempdir().unwrap();
    let (out, cfg) = run_fixture_pipeline(fix.path(), 3);
    let mtime = |name: &str| {
        std::fs::metadata(out.path().join(name))
            .unwrap()
            .modified()
            .unwrap()
    };
    let collapse_before = mtime("collapsed.emb");
    let kmeans_before = mtime("centroids.emb");
    let match_before = mtime("coupling.emb");
    let report_before = std::fs::read(out.path().join("report.tsv")).unwrap();
    let coupling_before = std::fs::read(out.path().join("coupling.emb")).unwrap();

    // Deleting a kmeans artifact forces kmeans and its successors to run
    // again, while collapse is left alone.
    std::thread::sleep(std::time::Duration::from_millis(20));
    std::fs::remove_file(out.path().join("assignments.labels")).unwrap();
    Runner::new(&cfg, out.path()).run_pipeline().unwrap();

    assert_eq!(mtime("collapsed.emb"), collapse_before, "collapse re-ran");
    assert!(
        mtime("centroids.emb") > kmeans_before,
        "kmeans did not re-run"
    );
    assert!(mtime("coupling.emb") > match_before, "match did not re-run");
    assert!(out.path().join("assignments.labels").exists());

    // Resumed outputs stay byte-identical to the originals.
    assert!(verify_assignments(out.path()).unwrap());
    assert_eq!(
        std::fs::read(out.path().join("report.tsv")).unwrap(),
        report_before
    );
    assert_eq!(
        std::fs::read(out.path().join("coupling.emb")).unwrap(),
        coupling_before
    );
}

#[test]
fn missing_input_exits_with_code_two_and_names_the_path() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "kmeans",
            "--out-dir",
            out.path().to_str().unwrap(),
            "--set",
            "segments=nowhere.txt",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("collapsed.emb"), "stderr was: {stderr}");
}

#[test]
fn bad_config_values_exit_with_code_three() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "kmeans",
            "--out-dir",
            out.path().to_str().unwrap(),
            "--set",
            "no_such_key=1",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn unknown_config_file_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "kmean_epochs = 7\n").unwrap();
    let output = bin()
        .args(["kmeans", "--config", conf.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("kmean_epochs"));
}

#[test]
fn one_by_one_match_writes_the_trivial_coupling() {
    // n = m = 1 toy inputs: the only feasible coupling is [[1.0]].
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let frames = phonematch::EmbeddingMatrix::new(
        2,
        2,
        vec![1.0, 0.0, 1.1, 0.0],
        phonematch::RoleTag::Frames,
    )
    .unwrap();
    phonematch::write_matrix(&dir.path().join("frames.emb"), &frames).unwrap();
    std::fs::write(dir.path().join("segments.txt"), "u0 2\n").unwrap();
    let embedding = phonematch::EmbeddingMatrix::new(
        1,
        3,
        vec![0.5, 0.5, 0.0],
        phonematch::RoleTag::PhoneEmbeddings,
    )
    .unwrap();
    phonematch::write_matrix(&dir.path().join("embeddings.emb"), &embedding).unwrap();
    std::fs::write(dir.path().join("alphabet.txt"), "x\n").unwrap();

    let mut cfg = PipelineConfig::default();
    cfg.set("frames", dir.path().join("frames.emb").to_str().unwrap())
        .unwrap();
    cfg.set(
        "segments",
        dir.path().join("segments.txt").to_str().unwrap(),
    )
    .unwrap();
    cfg.set(
        "embeddings",
        dir.path().join("embeddings.emb").to_str().unwrap(),
    )
    .unwrap();
    cfg.set(
        "alphabet",
        dir.path().join("alphabet.txt").to_str().unwrap(),
    )
    .unwrap();
    cfg.set("kmeans_input", "frames").unwrap();
    cfg.set("k", "1").unwrap();
    cfg.set("q_source", "uniform").unwrap();
    cfg.set("epsilon", "0.5").unwrap();
    let runner = Runner::new(&cfg, out.path());
    runner.run(Stage::Kmeans).unwrap();
    runner.run(Stage::Match).unwrap();
    let coupling = phonematch::read_matrix(&out.path().join("coupling.emb")).unwrap();
    assert_eq!(coupling.nrows(), 1);
    assert_eq!(coupling.dim(), 1);
    assert_eq!(coupling.get(0, 0), 1.0);
    let matching = std::fs::read_to_string(out.path().join("matching.tsv")).unwrap();
    assert_eq!(matching, "0\tx\n");
}

#[test]
fn corrupt_stage_resamples_and_is_seed_stable() {
    let fix = tempfile::tempdir().unwrap();
    let (out, cfg) = run_fixture_pipeline(fix.path(), 8);
    let mut cfg = cfg;
    cfg.set("percent", "100").unwrap();
    cfg.set("corrupt_unigram", "uniform").unwrap();
    let runner = Runner::new(&cfg, out.path());
    runner.run(Stage::Corrupt).unwrap();
    let first = std::fs::read(out.path().join("corrupted.labels")).unwrap();
    runner.run(Stage::Corrupt).unwrap();
    let second = std::fs::read(out.path().join("corrupted.labels")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("#source=corrupted shift_k=5\n"));

    // percent = 0 keeps the labels themselves.
    cfg.set("percent", "0").unwrap();
    Runner::new(&cfg, out.path()).run(Stage::Corrupt).unwrap();
    let untouched = std::fs::read_to_string(out.path().join("corrupted.labels")).unwrap();
    let pseudo = std::fs::read_to_string(out.path().join("pseudo.labels")).unwrap();
    let body = |s: &str| s.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&untouched), body(&pseudo));
}

#[test]
fn randproj_and_neighbors_stages_produce_coherent_artifacts() {
    let fix = tempfile::tempdir().unwrap();
    let (out, cfg) = run_fixture_pipeline(fix.path(), 9);
    let mut cfg = cfg;
    cfg.set("codebook_size", "8").unwrap();
    cfg.set("code_dim", "4").unwrap();
    let runner = Runner::new(&cfg, out.path());
    runner.run(Stage::Randproj).unwrap();
    let codebook = phonematch::read_matrix(&out.path().join("rp_codebook.emb")).unwrap();
    assert_eq!(codebook.nrows(), 8);
    assert_eq!(codebook.dim(), 4);

    runner.run(Stage::Neighbors).unwrap();
    let table = std::fs::read_to_string(out.path().join("neighbors.tsv")).unwrap();
    // One row per symbol plus the metric header.
    assert_eq!(table.lines().count(), 1 + 20);
    for line in table.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[1].split(',').count(), 3);
    }
}

#[test]
fn procrustes_stage_aligns_equal_dimension_spaces() {
    use rand::{Rng, SeedableRng};
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let m = 12;
    let d = 6;
    // Embeddings and frames in the same dimension; frames tightly packed
    // around each embedding (no rotation, so the alignment is near
    // identity on the preprocessed spaces).
    let emb_rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect())
        .collect();
    let mut frame_rows = Vec::new();
    let mut segments = String::new();
    for u in 0..10 {
        for row in emb_rows.iter() {
            for _ in 0..2 {
                frame_rows.push(
                    row.iter()
                        .map(|v| v + rng.random::<f64>() * 0.02)
                        .collect::<Vec<_>>(),
                );
            }
        }
        segments.push_str(&format!("u{u} {}\n", m * 2));
    }
    let frames =
        phonematch::EmbeddingMatrix::from_rows(frame_rows, phonematch::RoleTag::Frames).unwrap();
    let embeddings =
        phonematch::EmbeddingMatrix::from_rows(emb_rows, phonematch::RoleTag::PhoneEmbeddings)
            .unwrap();
    phonematch::write_matrix(&dir.path().join("frames.emb"), &frames).unwrap();
    phonematch::write_matrix(&dir.path().join("embeddings.emb"), &embeddings).unwrap();
    std::fs::write(dir.path().join("segments.txt"), segments).unwrap();
    let alphabet: Vec<String> = (0..m).map(|i| format!("s{i:02}")).collect();
    std::fs::write(dir.path().join("alphabet.txt"), alphabet.join("\n") + "\n").unwrap();

    let mut cfg = PipelineConfig::default();
    cfg.set("frames", dir.path().join("frames.emb").to_str().unwrap())
        .unwrap();
    cfg.set(
        "segments",
        dir.path().join("segments.txt").to_str().unwrap(),
    )
    .unwrap();
    cfg.set(
        "embeddings",
        dir.path().join("embeddings.emb").to_str().unwrap(),
    )
    .unwrap();
    cfg.set(
        "alphabet",
        dir.path().join("alphabet.txt").to_str().unwrap(),
    )
    .unwrap();
    cfg.set("kmeans_input", "frames").unwrap();
    cfg.set("k", &m.to_string()).unwrap();
    cfg.set("q_source", "uniform").unwrap();
    cfg.set("epsilon", "0.01").unwrap();
    let runner = Runner::new(&cfg, out.path());
    runner.run(Stage::Kmeans).unwrap();
    runner.run(Stage::Match).unwrap();
    runner.run(Stage::Procrustes).unwrap();

    let a = phonematch::read_matrix(&out.path().join("alignment.emb")).unwrap();
    assert_eq!(a.nrows(), d);
    assert_eq!(a.dim(), d);
    // A^T A = I within f32 persistence error.
    for r in 0..d {
        for c in 0..d {
            let dot_rc: f64 = (0..d).map(|k| a.get(k, r) * a.get(k, c)).sum();
            let expected = if r == c { 1.0 } else { 0.0 };
            assert!((dot_rc - expected).abs() < 1e-5, "AtA[{r}][{c}] = {dot_rc}");
        }
    }
    assert!(out.path().join("projected.emb").exists());
}

#[test]
fn speaker_segments_add_the_agreement_grid() {
    let fix = tempfile::tempdir().unwrap();
    let conf = fixture::generate(fix.path(), FixtureKind::Matching, 6).unwrap();
    let mut cfg = PipelineConfig::from_file(&conf).unwrap();
    // Group consecutive utterances into speakers: 5 speakers over 50
    // utterances of 40 frames each.
    let speakers: String = (0..5).map(|s| format!("spk{s} {}\n", 10 * 40)).collect();
    let spk_path = fix.path().join("speakers.txt");
    std::fs::write(&spk_path, speakers).unwrap();
    cfg.set("speakers", spk_path.to_str().unwrap()).unwrap();
    let out = tempfile::tempdir().unwrap();
    Runner::new(&cfg, out.path()).run(Stage::Collapse).unwrap();
    let grid = std::fs::read_to_string(out.path().join("speaker_utterance_grid.tsv")).unwrap();
    // Offsets ride on a single axis, so the two first directions agree.
    let first_cell: f64 = grid
        .lines()
        .find(|l| !l.starts_with('#'))
        .unwrap()
        .split('\t')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(first_cell > 0.99, "first grid cell {first_cell}");
}

#[test]
fn cli_error_codes_are_stable() {
    assert_eq!(CliError::MissingInput("x".into()).exit_code(), 2);
    assert_eq!(CliError::Invalid("x".into()).exit_code(), 3);
    assert_eq!(CliError::Numerical("x".into()).exit_code(), 4);
}
