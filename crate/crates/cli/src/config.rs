//! Line-based `key = value` pipeline configuration with CLI overrides.
//!
//! Unknown keys are rejected so a misspelled hyperparameter cannot silently
//! fall back to a default. Paths are resolved relative to the config file's
//! directory (or the working directory when no file is given).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Every accepted key with its default value.
const DEFAULTS: &[(&str, &str)] = &[
    // Input paths.
    ("frames", ""),
    ("segments", ""),
    ("speakers", ""),
    ("corpus", ""),
    ("lexicon", ""),
    ("refs", ""),
    // `cbow` means the cbow stage artifacts; otherwise a path.
    ("embeddings", "cbow"),
    ("alphabet", "cbow"),
    // `collapsed` or `frames` or a path.
    ("kmeans_input", "collapsed"),
    // Collapse.
    ("collapse_j", "1"),
    // k-means.
    ("k", "50"),
    ("kmeans_epochs", "20"),
    // Random projection baseline.
    ("codebook_size", "50"),
    ("code_dim", "16"),
    // CBOW.
    ("cbow_dim", "100"),
    ("window", "5"),
    ("step_size", "0.005"),
    ("clip_norm", "5"),
    ("cbow_epochs", "15"),
    // Which trained vectors feed the matcher: input | output | sum.
    ("cbow_vectors", "input"),
    // Matching. `apc` = 0.0005, `cpc` = 0.01, or a number.
    ("epsilon", "apc"),
    ("outer_iterations", "1000"),
    ("inner_iterations", "50"),
    // `uniform`, `phones` (the cbow stage artifact), or a path.
    ("q_source", "phones"),
    // Pseudo-labels.
    ("shift_k", "5"),
    // Corruption. unigram source: phones | input | uniform.
    ("percent", "0"),
    ("corrupt_unigram", "phones"),
    ("corrupt_input", ""),
    // Neighbor tables. input: `embeddings` or a path.
    ("neighbors_top", "3"),
    ("neighbors_metric", "euclidean"),
    ("neighbors_input", "embeddings"),
    // Reproducibility.
    ("seed", "0"),
];

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    /// Loads a config file; every line is `key = value`, blank lines and
    /// `#` comments allowed.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            ..Self::default()
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| ConfigError(format!("{}:{}: {}", path.display(), lineno + 1, e.0)))?;
        }
        Ok(cfg)
    }

    /// Sets one key, rejecting unknown names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !DEFAULTS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("unknown config key {key}"))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get(key).parse().map_err(|_| {
            ConfigError(format!(
                "`{key}` must be a non-negative integer, got `{}`",
                self.get(key)
            ))
        })
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|_| ConfigError(format!("`{key}` must be a number, got `{}`", self.get(key))))
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.get("seed").parse().map_err(|_| {
            ConfigError(format!(
                "`seed` must be an integer, got `{}`",
                self.get("seed")
            ))
        })
    }

    /// Entropy regularizer: the named presets or a literal value.
    pub fn epsilon(&self) -> Result<f64, ConfigError> {
        match self.get("epsilon") {
            "apc" => Ok(0.0005),
            "cpc" => Ok(0.01),
            other => other.parse().map_err(|_| {
                ConfigError(format!(
                    "`epsilon` must be `apc`, `cpc`, or a positive number, got `{other}`"
                ))
            }),
        }
    }

    /// A configured path, resolved against the config file's directory.
    /// Empty values are an error naming the key.
    pub fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        let raw = self.get(key);
        if raw.is_empty() {
            return Err(ConfigError(format!(
                "config key `{key}` (a path) is not set"
            )));
        }
        Ok(self.resolve(raw))
    }

    pub fn resolve(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    /// Hash over the canonical effective configuration, seed excluded (it
    /// is recorded in its own manifest column).
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in &self.values {
            if k == "seed" {
                continue;
            }
            hasher.update(k.as_bytes());
            hasher.update(b" = ");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Renders the effective configuration as a config file.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Per-stage seed: one reproducibility knob, independent stage streams.
pub fn stage_seed(global_seed: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("k", "10").is_ok());
        assert!(cfg.set("kmean_epochs", "5").is_err());
    }

    #[test]
    fn epsilon_presets_resolve() {
        let mut cfg = PipelineConfig::default();
        assert_eq!(cfg.epsilon().unwrap(), 0.0005);
        cfg.set("epsilon", "cpc").unwrap();
        assert_eq!(cfg.epsilon().unwrap(), 0.01);
        cfg.set("epsilon", "0.25").unwrap();
        assert_eq!(cfg.epsilon().unwrap(), 0.25);
        cfg.set("epsilon", "warm").unwrap();
        assert!(cfg.epsilon().is_err());
    }

    #[test]
    fn hash_ignores_seed_but_not_parameters() {
        let mut a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        b.set("seed", "99").unwrap();
        assert_eq!(a.hash(), b.hash());
        a.set("k", "13").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn stage_seeds_differ_by_stage() {
        assert_ne!(stage_seed(7, "kmeans"), stage_seed(7, "cbow"));
        assert_eq!(stage_seed(7, "kmeans"), stage_seed(7, "kmeans"));
        assert_ne!(stage_seed(7, "kmeans"), stage_seed(8, "kmeans"));
    }
}
