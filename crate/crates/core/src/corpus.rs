//! Symbol sequences, pronunciation lexicons, and unigram distributions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Reserved symbol for silence.
pub const SIL: &str = "sil";
/// Reserved symbol for spoken noise; also the sink for out-of-vocabulary words.
pub const SPN: &str = "spn";

/// One utterance as a sequence of symbol IDs over a fixed alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    pub utterance_id: String,
    pub tokens: Vec<usize>,
}

impl LabelSequence {
    /// Validates non-emptiness and that every token is below `alphabet_size`.
    pub fn new(
        utterance_id: impl Into<String>,
        tokens: Vec<usize>,
        alphabet_size: usize,
    ) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if tokens.is_empty() {
            return Err(Error::EmptyInput(format!(
                "utterance {utterance_id} has no tokens"
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= alphabet_size) {
            return Err(Error::Data(format!(
                "utterance {utterance_id}: token {t} out of range for alphabet of {alphabet_size}"
            )));
        }
        Ok(Self {
            utterance_id,
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Word-to-pronunciation table over an ordered symbol alphabet.
///
/// The alphabet always contains the reserved symbols [`SIL`] and [`SPN`];
/// out-of-vocabulary words expand to a single [`SPN`].
#[derive(Debug, Clone)]
pub struct Lexicon {
    alphabet: Vec<String>,
    symbol_ids: BTreeMap<String, usize>,
    entries: BTreeMap<String, Vec<usize>>,
    spn_id: usize,
    sil_id: usize,
}

impl Lexicon {
    /// Builds a lexicon from word pronunciations given as symbol strings.
    ///
    /// The alphabet is the sorted set of all symbols that appear, plus the
    /// reserved `sil`/`spn`, so IDs are deterministic for a given word list.
    pub fn from_pronunciations<'a, I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, Vec<&'a str>)>,
    {
        let entries: Vec<(String, Vec<String>)> = entries
            .into_iter()
            .map(|(w, ps)| (w.to_string(), ps.into_iter().map(str::to_string).collect()))
            .collect();
        let mut symbols: std::collections::BTreeSet<String> = entries
            .iter()
            .flat_map(|(_, ps)| ps.iter().cloned())
            .collect();
        symbols.insert(SIL.to_string());
        symbols.insert(SPN.to_string());
        let alphabet: Vec<String> = symbols.into_iter().collect();
        let symbol_ids: BTreeMap<String, usize> = alphabet
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let mut id_entries = BTreeMap::new();
        for (word, phones) in entries {
            if phones.is_empty() {
                return Err(Error::Data(format!(
                    "word {word} has an empty pronunciation"
                )));
            }
            let ids = phones.iter().map(|p| symbol_ids[p]).collect();
            if id_entries.insert(word.clone(), ids).is_some() {
                return Err(Error::Data(format!("duplicate lexicon entry for {word}")));
            }
        }
        let spn_id = symbol_ids[SPN];
        let sil_id = symbol_ids[SIL];
        Ok(Self {
            alphabet,
            symbol_ids,
            entries: id_entries,
            spn_id,
            sil_id,
        })
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn spn_id(&self) -> usize {
        self.spn_id
    }

    pub fn sil_id(&self) -> usize {
        self.sil_id
    }

    pub fn symbol_id(&self, symbol: &str) -> Option<usize> {
        self.symbol_ids.get(symbol).copied()
    }

    pub fn pronounce(&self, word: &str) -> Option<&[usize]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// A probability vector over symbols or clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramDistribution {
    weights: Vec<f64>,
}

impl UnigramDistribution {
    const SUM_TOL: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput("empty distribution".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::Data(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::Data(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput(
                "uniform distribution over 0 symbols".into(),
            ));
        }
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyInput("zero total count".into()));
        }
        Ok(Self {
            weights: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Maps frame rows of a flat matrix back to utterances: `(utterance_id, len)`
/// in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentTable {
    entries: Vec<(String, usize)>,
}

impl SegmentTable {
    pub fn new(entries: Vec<(String, usize)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput("no segments".into()));
        }
        if entries.iter().any(|(_, n)| *n == 0) {
            return Err(Error::Data("zero-length segment".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }

    pub fn total_frames(&self) -> usize {
        self.entries.iter().map(|(_, n)| n).sum()
    }

    /// Iterates `(utterance_id, start_row, len)`.
    pub fn ranges(&self) -> impl Iterator<Item = (&str, usize, usize)> {
        self.entries.iter().scan(0usize, |start, (id, n)| {
            let s = *start;
            *start += n;
            Some((id.as_str(), s, *n))
        })
    }

    /// A group ID per frame (segments numbered in file order).
    pub fn frame_groups(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.total_frames());
        for (g, (_, n)) in self.entries.iter().enumerate() {
            out.extend(std::iter::repeat_n(g, *n));
        }
        out
    }
}

/// Expands words into one phone sequence; OOV words become a single `spn`.
pub fn expand_text(
    utterance_id: &str,
    words: &[impl AsRef<str>],
    lexicon: &Lexicon,
) -> Result<LabelSequence> {
    if words.is_empty() {
        return Err(Error::EmptyInput(format!(
            "utterance {utterance_id} has no words"
        )));
    }
    let mut tokens = Vec::new();
    for word in words {
        match lexicon.pronounce(word.as_ref()) {
            Some(ids) => tokens.extend_from_slice(ids),
            None => tokens.push(lexicon.spn_id()),
        }
    }
    LabelSequence::new(utterance_id, tokens, lexicon.alphabet_size())
}

/// Empirical symbol distribution over a set of sequences.
pub fn unigram_from_sequences(
    seqs: &[LabelSequence],
    alphabet_size: usize,
) -> Result<UnigramDistribution> {
    let mut counts = vec![0u64; alphabet_size];
    for seq in seqs {
        for &t in &seq.tokens {
            if t >= alphabet_size {
                return Err(Error::InvalidArgument(format!(
                    "token {t} out of range for alphabet of {alphabet_size}"
                )));
            }
            counts[t] += 1;
        }
    }
    UnigramDistribution::from_counts(&counts)
}
