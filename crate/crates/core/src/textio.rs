//! Text file formats exchanged between pipeline stages.
//!
//! - Label files: one utterance per line, `utterance_id` then
//!   whitespace-separated symbol strings; pseudo-label files carry a first
//!   header line `#source=<source> shift_k=<k>`.
//! - Lexicon files: `word<TAB>phone phone ...` per line.
//! - Alphabet files: one symbol per line, row-aligned with a matrix.
//! - Segment files: `utterance_id frame_count` per line.
//! - TSV emitters for matchings, objective traces, grids, neighbor tables,
//!   and metric reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::{LabelSequence, Lexicon, SegmentTable};
use crate::error::{Error, Result};
use crate::matrix::{write_atomic, EmbeddingMatrix};
use crate::metrics::MetricReport;
use crate::pseudolabel::{LabelSource, PseudoLabelSequence};

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a label file whose tokens are symbol strings over `alphabet`.
pub fn read_labels(path: &Path, alphabet: &[String]) -> Result<Vec<LabelSequence>> {
    let ids: BTreeMap<&str, usize> = alphabet
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: missing utterance id",
                path.display(),
                lineno + 1
            ))
        })?;
        let tokens = parts
            .map(|tok| {
                ids.get(tok).copied().ok_or_else(|| {
                    Error::Format(format!(
                        "{}:{}: unknown symbol {tok}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        out.push(LabelSequence::new(id, tokens, alphabet.len())?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} has no utterances",
            path.display()
        )));
    }
    Ok(out)
}

/// Reads a label file whose tokens are decimal IDs (cluster assignments).
pub fn read_numeric_labels(path: &Path, alphabet_size: usize) -> Result<Vec<LabelSequence>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: missing utterance id",
                path.display(),
                lineno + 1
            ))
        })?;
        let tokens = parts
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| {
                    Error::Format(format!(
                        "{}:{}: token {tok} is not an integer",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        out.push(LabelSequence::new(id, tokens, alphabet_size)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} has no utterances",
            path.display()
        )));
    }
    Ok(out)
}

/// Writes label sequences with symbol-string tokens.
pub fn write_labels(path: &Path, seqs: &[LabelSequence], alphabet: &[String]) -> Result<()> {
    let mut out = String::new();
    for seq in seqs {
        out.push_str(&seq.utterance_id);
        for &t in &seq.tokens {
            out.push(' ');
            out.push_str(alphabet.get(t).ok_or_else(|| {
                Error::InvalidArgument(format!("token {t} out of range for alphabet"))
            })?);
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes label sequences with decimal-ID tokens.
pub fn write_numeric_labels(path: &Path, seqs: &[LabelSequence]) -> Result<()> {
    let mut out = String::new();
    for seq in seqs {
        out.push_str(&seq.utterance_id);
        for &t in &seq.tokens {
            out.push(' ');
            out.push_str(&t.to_string());
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes pseudo-label sequences with the `#source=... shift_k=...` header.
pub fn write_pseudo_labels(
    path: &Path,
    seqs: &[PseudoLabelSequence],
    alphabet: &[String],
) -> Result<()> {
    let Some(first) = seqs.first() else {
        return Err(Error::EmptyInput("no pseudo-label sequences".into()));
    };
    let mut out = format!(
        "#source={} shift_k={}\n",
        first.source.as_str(),
        first.shift_k
    );
    for seq in seqs {
        out.push_str(&seq.utterance_id);
        for &t in &seq.labels {
            out.push(' ');
            out.push_str(alphabet.get(t).ok_or_else(|| {
                Error::InvalidArgument(format!("label {t} out of range for alphabet"))
            })?);
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a pseudo-label file; the header is required.
pub fn read_pseudo_labels(path: &Path, alphabet: &[String]) -> Result<Vec<PseudoLabelSequence>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .filter(|l| l.starts_with('#'))
        .ok_or_else(|| Error::Format(format!("{}: missing header line", path.display())))?;
    let (source, shift_k) = parse_header(header)
        .ok_or_else(|| Error::Format(format!("{}: bad header {header:?}", path.display())))?;
    let seqs = read_labels(path, alphabet)?;
    Ok(seqs
        .into_iter()
        .map(|s| PseudoLabelSequence {
            utterance_id: s.utterance_id,
            labels: s.tokens,
            source,
            shift_k,
        })
        .collect())
}

fn parse_header(line: &str) -> Option<(LabelSource, usize)> {
    let mut source = None;
    let mut shift = None;
    for part in line.trim_start_matches('#').split_whitespace() {
        if let Some(v) = part.strip_prefix("source=") {
            source = LabelSource::parse(v);
        } else if let Some(v) = part.strip_prefix("shift_k=") {
            shift = v.parse::<usize>().ok();
        }
    }
    Some((source?, shift?))
}

/// Reads a `word<TAB>phone phone ...` lexicon file.
pub fn read_lexicon(path: &Path) -> Result<Lexicon> {
    let text = read_to_string(path)?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (word, phones) = line.split_once('\t').ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: expected word<TAB>phones",
                path.display(),
                lineno + 1
            ))
        })?;
        let phones: Vec<&str> = phones.split_whitespace().collect();
        if phones.is_empty() {
            return Err(Error::Format(format!(
                "{}:{}: word {word} has no phones",
                path.display(),
                lineno + 1
            )));
        }
        entries.push((word, phones));
    }
    Lexicon::from_pronunciations(entries)
}

pub fn write_lexicon(path: &Path, lexicon: &Lexicon) -> Result<()> {
    let mut out = String::new();
    for word in lexicon.words() {
        out.push_str(word);
        out.push('\t');
        let ids = lexicon.pronounce(word).unwrap();
        let phones: Vec<&str> = ids
            .iter()
            .map(|&i| lexicon.alphabet()[i].as_str())
            .collect();
        out.push_str(&phones.join(" "));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a word-level text corpus: `utterance_id w1 w2 ...` per line.
pub fn read_text_corpus(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: missing utterance id",
                path.display(),
                lineno + 1
            ))
        })?;
        let words: Vec<String> = parts.map(str::to_string).collect();
        if words.is_empty() {
            return Err(Error::Format(format!(
                "{}:{}: utterance {id} has no words",
                path.display(),
                lineno + 1
            )));
        }
        out.push((id.to_string(), words));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} has no utterances",
            path.display()
        )));
    }
    Ok(out)
}

pub fn read_alphabet(path: &Path) -> Result<Vec<String>> {
    let text = read_to_string(path)?;
    let symbols: Vec<String> = text
        .lines()
        .map(str::to_string)
        .filter(|l| !l.is_empty())
        .collect();
    if symbols.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} has no symbols",
            path.display()
        )));
    }
    Ok(symbols)
}

pub fn write_alphabet(path: &Path, alphabet: &[String]) -> Result<()> {
    let mut out = String::new();
    for s in alphabet {
        out.push_str(s);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_segments(path: &Path) -> Result<SegmentTable> {
    let text = read_to_string(path)?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().ok_or_else(|| {
            Error::Format(format!("{}:{}: missing id", path.display(), lineno + 1))
        })?;
        let count = parts
            .next()
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| {
                Error::Format(format!(
                    "{}:{}: expected a frame count",
                    path.display(),
                    lineno + 1
                ))
            })?;
        entries.push((id.to_string(), count));
    }
    SegmentTable::new(entries)
}

pub fn write_segments(path: &Path, segments: &SegmentTable) -> Result<()> {
    let mut out = String::new();
    for (id, n) in segments.entries() {
        out.push_str(id);
        out.push(' ');
        out.push_str(&n.to_string());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Two-column TSV `centroid_id<TAB>symbol`.
pub fn write_matching_tsv(path: &Path, matching: &[usize], alphabet: &[String]) -> Result<()> {
    let mut out = String::new();
    for (c, &s) in matching.iter().enumerate() {
        let symbol = alphabet
            .get(s)
            .ok_or_else(|| Error::InvalidArgument(format!("matched symbol {s} out of range")))?;
        out.push_str(&format!("{c}\t{symbol}\n"));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_matching_tsv(path: &Path, alphabet: &[String]) -> Result<Vec<usize>> {
    let ids: BTreeMap<&str, usize> = alphabet
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (idx, symbol) = line.split_once('\t').ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: expected two columns",
                path.display(),
                lineno + 1
            ))
        })?;
        let idx: usize = idx.parse().map_err(|_| {
            Error::Format(format!(
                "{}:{}: bad centroid id {idx}",
                path.display(),
                lineno + 1
            ))
        })?;
        if idx != out.len() {
            return Err(Error::Format(format!(
                "{}:{}: centroid ids must be consecutive from 0",
                path.display(),
                lineno + 1
            )));
        }
        let s = ids.get(symbol).copied().ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: unknown symbol {symbol}",
                path.display(),
                lineno + 1
            ))
        })?;
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{} is empty", path.display())));
    }
    Ok(out)
}

/// `iteration<TAB>objective` trace for plotting.
pub fn write_trace_tsv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = String::from("iteration\tobjective\n");
    for (i, v) in trace.iter().enumerate() {
        out.push_str(&format!("{}\t{}\n", i + 1, v));
    }
    write_atomic(path, out.as_bytes())
}

/// Numeric grid (correlation grids and similar small matrices) as TSV, with
/// optional `#`-prefixed note lines.
pub fn write_grid_tsv(path: &Path, grid: &EmbeddingMatrix, notes: &[&str]) -> Result<()> {
    let mut out = String::new();
    for note in notes {
        out.push_str(&format!("# {note}\n"));
    }
    for row in grid.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Per-symbol neighbor table: `symbol<TAB>n1,n2,...<TAB>score,score,...`.
pub fn write_neighbors_tsv(
    path: &Path,
    names: &[String],
    neighbors: &[Vec<(usize, f64)>],
    metric_note: &str,
) -> Result<()> {
    if names.len() != neighbors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} names for {} neighbor rows",
            names.len(),
            neighbors.len()
        )));
    }
    let mut out = format!("# metric: {metric_note}\n");
    for (name, row) in names.iter().zip(neighbors) {
        let labels: Vec<&str> = row.iter().map(|&(j, _)| names[j].as_str()).collect();
        let scores: Vec<String> = row.iter().map(|&(_, s)| s.to_string()).collect();
        out.push_str(&format!(
            "{name}\t{}\t{}\n",
            labels.join(","),
            scores.join(",")
        ));
    }
    write_atomic(path, out.as_bytes())
}

/// Metric report as TSV (full precision) with definition notes in the
/// header.
pub fn write_report_tsv(path: &Path, report: &MetricReport, notes: &[&str]) -> Result<()> {
    let mut out = String::new();
    for note in notes {
        out.push_str(&format!("# {note}\n"));
    }
    out.push_str("metric\tvalue\n");
    out.push_str(&format!("phone_purity\t{}\n", report.phone_purity));
    out.push_str(&format!("cluster_purity\t{}\n", report.cluster_purity));
    out.push_str(&format!(
        "weighted_phone_purity\t{}\n",
        report.weighted_phone_purity
    ));
    out.push_str(&format!("frame_per\t{}\n", report.frame_per));
    if let Some(tp) = report.type_per {
        out.push_str(&format!("type_per\t{tp}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Human-readable metric block; percentages rounded to one decimal here
/// only.
pub fn render_report_text(report: &MetricReport, notes: &[&str]) -> String {
    let pct = |v: f64| format!("{:.1}", v * 100.0);
    let mut out = String::new();
    for note in notes {
        out.push_str(&format!("# {note}\n"));
    }
    out.push_str(&format!(
        "phone purity (PP):        {}%\n",
        pct(report.phone_purity)
    ));
    out.push_str(&format!(
        "cluster purity (CP):      {}%\n",
        pct(report.cluster_purity)
    ));
    out.push_str(&format!(
        "weighted phone purity:    {}%\n",
        pct(report.weighted_phone_purity)
    ));
    out.push_str(&format!(
        "frame PER:                {}%\n",
        pct(report.frame_per)
    ));
    match report.type_per {
        Some(tp) => out.push_str(&format!("type PER:                 {}%\n", pct(tp))),
        None => out.push_str("type PER:                 - (no matching supplied)\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn label_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.labels");
        let alphabet: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let seqs = vec![
            LabelSequence::new("utt1", vec![0, 2, 1], 3).unwrap(),
            LabelSequence::new("utt2", vec![1], 3).unwrap(),
        ];
        write_labels(&path, &seqs, &alphabet).unwrap();
        let back = read_labels(&path, &alphabet).unwrap();
        assert_eq!(back, seqs);
    }

    #[test]
    fn unknown_symbol_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.labels");
        std::fs::write(&path, "utt1 a zz\n").unwrap();
        let alphabet: Vec<String> = vec!["a".into()];
        assert!(matches!(
            read_labels(&path, &alphabet),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn pseudo_label_header_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.labels");
        let alphabet: Vec<String> = vec!["a".into(), "b".into()];
        let seqs = vec![PseudoLabelSequence {
            utterance_id: "u1".into(),
            labels: vec![1, 0, 1],
            source: LabelSource::Matching,
            shift_k: 5,
        }];
        write_pseudo_labels(&path, &seqs, &alphabet).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#source=matching shift_k=5\n"));
        let back = read_pseudo_labels(&path, &alphabet).unwrap();
        assert_eq!(back, seqs);
    }

    #[test]
    fn lexicon_file_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("lex.txt");
        std::fs::write(&path, "cat\tk ae t\nat\tae t\n").unwrap();
        let lex = read_lexicon(&path).unwrap();
        assert_eq!(lex.pronounce("cat").unwrap().len(), 3);
        let out = dir.path().join("lex2.txt");
        write_lexicon(&out, &lex).unwrap();
        let lex2 = read_lexicon(&out).unwrap();
        assert_eq!(lex.alphabet(), lex2.alphabet());
    }

    #[test]
    fn matching_tsv_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let alphabet: Vec<String> = vec!["x".into(), "y".into(), "z".into()];
        write_matching_tsv(&path, &[2, 0, 2], &alphabet).unwrap();
        assert_eq!(read_matching_tsv(&path, &alphabet).unwrap(), vec![2, 0, 2]);
    }

    #[test]
    fn segments_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("seg.txt");
        let seg = SegmentTable::new(vec![("u1".into(), 4), ("u2".into(), 2)]).unwrap();
        write_segments(&path, &seg).unwrap();
        assert_eq!(read_segments(&path).unwrap(), seg);
    }
}
