use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use phonematch_cli::config::PipelineConfig;
use phonematch_cli::fixture::{self, FixtureKind};
use phonematch_cli::stages::{CliError, Runner, Stage};

/// Match cluster centroids of frame representations to symbol embeddings
/// and derive pseudo-labels, alignment maps, and evaluation reports.
#[derive(Parser)]
#[command(name = "phonematch", version, about)]
struct Cli {
    /// Path to a `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for stage artifacts and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Config overrides, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collapse the top utterance-mean directions out of the frames.
    Collapse,
    /// Cluster frames with k-means and persist centroids + assignments.
    Kmeans,
    /// Random-projection quantizer baseline over the raw frames.
    Randproj,
    /// Train CBOW symbol embeddings from the text corpus and lexicon.
    Cbow,
    /// Match centroids to embeddings with entropic Gromov-Wasserstein.
    Match,
    /// Orthogonal Procrustes alignment between the two spaces.
    Procrustes,
    /// Turn cluster assignments plus the matching into pseudo-labels.
    Label,
    /// Corrupt a pseudo-label file by resampling a fraction of positions.
    Corrupt,
    /// Purity and phone-error-rate report against reference labels.
    Evaluate,
    /// Nearest-neighbor table of the embedding vectors.
    Neighbors,
    /// Run collapse, kmeans, cbow, match, label, and evaluate in order,
    /// resuming after the last complete stage.
    Pipeline,
    /// Generate a synthetic fixture and a ready-to-run config file.
    Fixture {
        #[arg(long, value_enum, default_value_t = FixtureArg::Pipeline)]
        kind: FixtureArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FixtureArg {
    Pipeline,
    Matching,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for pair in &cli.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("--set expects key=value, got `{pair}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Fixture { kind } = &cli.command {
        let seed = cli.seed.unwrap_or(0);
        let kind = match kind {
            FixtureArg::Pipeline => FixtureKind::Pipeline,
            FixtureArg::Matching => FixtureKind::Matching,
        };
        let conf = fixture::generate(&cli.out_dir, kind, seed)?;
        println!("fixture written; config at {}", conf.display());
        return Ok(());
    }

    let cfg = load_config(cli)?;
    let runner = Runner::new(&cfg, &cli.out_dir);
    match &cli.command {
        Command::Collapse => runner.run(Stage::Collapse),
        Command::Kmeans => runner.run(Stage::Kmeans),
        Command::Randproj => runner.run(Stage::Randproj),
        Command::Cbow => runner.run(Stage::Cbow),
        Command::Match => runner.run(Stage::Match),
        Command::Procrustes => runner.run(Stage::Procrustes),
        Command::Label => runner.run(Stage::Label),
        Command::Corrupt => runner.run(Stage::Corrupt),
        Command::Evaluate => runner.run(Stage::Evaluate),
        Command::Neighbors => runner.run(Stage::Neighbors),
        Command::Pipeline => runner.run_pipeline(),
        Command::Fixture { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
