//! Labelled corpora: JSONL loading, synthetic generation and resampling.

pub mod metrics;
pub mod synth;

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{build_graph, source_hash, tokenize, CodeGraph, Label, MAX_NODES};

pub use metrics::{render_table, verdict, EvalReport, THRESHOLD};
pub use synth::{generate_function, synth_corpus, PatternSet};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("no usable records")]
    EmptyDataset,
    #[error("need {needed} positives, only {available} available")]
    InsufficientPositives { needed: usize, available: usize },
    #[error("positive rate must lie strictly between 0 and 1, got {0}")]
    InvalidRate(f64),
}

/// One labelled function, as stored one per line in a JSONL corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub project: String,
    pub label: Label,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub records: Vec<CorpusRecord>,
    pub graphs: Vec<CodeGraph>,
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    project: String,
    label: i64,
    code: String,
}

/// Parses one JSONL line into a record and its graph.
fn parse_line(line: &str) -> Result<(CorpusRecord, CodeGraph), String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("invalid record: {e}"))?;
    let label = u8::try_from(raw.label).ok().and_then(Label::from_bit).ok_or("label out of range")?;
    let graph = build_graph(&raw.code, Some(label), MAX_NODES).map_err(|e| e.to_string())?;
    Ok((CorpusRecord { id: raw.id, project: raw.project, label, code: raw.code }, graph))
}

/// Loads `{"id","project","label","code"}` lines. Bad lines are reported
/// and skipped; duplicate sources are kept with a warning.
pub fn load_jsonl(path: &Path) -> Result<LoadedCorpus, DatasetError> {
    let io = |source| DatasetError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = LoadedCorpus::default();
    let mut seen: HashMap<String, String> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok((record, graph)) => {
                if let Some(first) = seen.get(&graph.source_hash) {
                    out.warnings.push(format!("line {}: {} duplicates the source of {first}", i + 1, record.id));
                } else {
                    seen.insert(graph.source_hash.clone(), record.id.clone());
                }
                out.records.push(record);
                out.graphs.push(graph);
            }
            Err(reason) => out.rejections.push(Rejection { line: i + 1, reason }),
        }
    }
    for r in &out.rejections {
        log::warn!("line {}: {}", r.line, r.reason);
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    if out.records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(out)
}

pub fn write_jsonl(records: &[CorpusRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
}

/// Keeps every negative and draws `round(rate * n_neg / (1 - rate))`
/// positives without replacement. Record order is preserved.
pub fn imbalanced_sample(records: &[CorpusRecord], rate: f64, seed: u64) -> Result<Vec<CorpusRecord>, DatasetError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(DatasetError::InvalidRate(rate));
    }
    let positives: Vec<usize> = (0..records.len()).filter(|&i| records[i].label == Label::Vulnerable).collect();
    let negatives = records.len() - positives.len();
    let needed = (rate * negatives as f64 / (1.0 - rate)).round() as usize;
    if needed > positives.len() {
        return Err(DatasetError::InsufficientPositives { needed, available: positives.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep: HashSet<usize> = positives.choose_multiple(&mut rng, needed).copied().collect();
    let out: Vec<CorpusRecord> = records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.label == Label::Benign || keep.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    if out.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(out)
}

/// Multinomial naive Bayes over lexer token counts, trained on `train` and
/// scored on `test`. Used to check that a corpus carries no lexical shortcut.
pub fn lexical_baseline_accuracy(train: &[CorpusRecord], test: &[CorpusRecord]) -> f64 {
    let tokens = |r: &CorpusRecord| -> Vec<String> {
        tokenize(&r.code).map(|ts| ts.into_iter().map(|t| t.text).collect()).unwrap_or_default()
    };
    let mut counts: [HashMap<String, f64>; 2] = [HashMap::new(), HashMap::new()];
    let mut totals = [0.0f64; 2];
    let mut docs = [0.0f64; 2];
    let mut vocab: HashSet<String> = HashSet::new();
    for r in train {
        let c = r.label.bit() as usize;
        docs[c] += 1.0;
        for t in tokens(r) {
            *counts[c].entry(t.clone()).or_default() += 1.0;
            totals[c] += 1.0;
            vocab.insert(t);
        }
    }
    let v = vocab.len() as f64;
    let correct = test
        .iter()
        .filter(|r| {
            let score = |c: usize| {
                let prior = ((docs[c] + 1.0) / (docs[0] + docs[1] + 2.0)).ln();
                prior
                    + tokens(r)
                        .iter()
                        .map(|t| ((counts[c].get(t).copied().unwrap_or(0.0) + 1.0) / (totals[c] + v + 1.0)).ln())
                        .sum::<f64>()
            };
            let predicted = if score(1) > score(0) { Label::Vulnerable } else { Label::Benign };
            predicted == r.label
        })
        .count();
    correct as f64 / test.len().max(1) as f64
}

/// Source hash of each record, for duplicate checks.
pub fn record_hashes(records: &[CorpusRecord]) -> Vec<String> {
    records.iter().map(|r| source_hash(&r.code)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn rec(id: &str, label: Label, code: &str) -> CorpusRecord {
        CorpusRecord { id: id.into(), project: "p".into(), label, code: code.into() }
    }

    #[test]
    fn loader_rejects_bad_lines_and_warns_on_duplicates() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"a","project":"p","label":1,"code":"int f(){{return 0;}}"}}"#).unwrap();
        writeln!(f, r#"{{"id":"b","project":"p","label":2,"code":"int f(){{return 0;}}"}}"#).unwrap();
        writeln!(f, "not json").unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"id":"c","project":"p","label":0,"code":"int f(){{return 0;}}"}}"#).unwrap();
        writeln!(f, r#"{{"id":"d","project":"p","label":0,"code":"int f( {{"}}"#).unwrap();
        let c = load_jsonl(f.path()).unwrap();
        assert_eq!(c.records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(c.rejections.len(), 3);
        assert_eq!(c.rejections[0], Rejection { line: 2, reason: "label out of range".into() });
        assert_eq!(c.rejections[1].line, 3);
        assert_eq!(c.rejections[2].line, 6);
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn loader_errors() {
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(load_jsonl(f.path()), Err(DatasetError::EmptyDataset)));
        assert!(matches!(load_jsonl(Path::new("/nonexistent/x.jsonl")), Err(DatasetError::Io { .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let records = synth_corpus(6, 0.5, 3, PatternSet::default());
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(write_jsonl(&records).as_bytes()).unwrap();
        assert_eq!(load_jsonl(f.path()).unwrap().records, records);
    }

    #[test]
    fn imbalanced_rate() {
        let mut records: Vec<CorpusRecord> =
            (0..90).map(|i| rec(&format!("n{i}"), Label::Benign, "int f(){return 0;}")).collect();
        records.extend((0..20).map(|i| rec(&format!("p{i}"), Label::Vulnerable, "int f(){return 1;}")));
        let s = imbalanced_sample(&records, 0.1, 0).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s.iter().filter(|r| r.label == Label::Vulnerable).count(), 10);
        assert_eq!(s, imbalanced_sample(&records, 0.1, 0).unwrap());
    }

    #[test]
    fn imbalanced_errors() {
        let records = vec![rec("n", Label::Benign, "x"), rec("p", Label::Vulnerable, "y")];
        assert!(matches!(imbalanced_sample(&records, 1.0, 0), Err(DatasetError::InvalidRate(_))));
        assert!(matches!(imbalanced_sample(&records, 0.0, 0), Err(DatasetError::InvalidRate(_))));
        assert!(matches!(
            imbalanced_sample(&records, 0.9, 0),
            Err(DatasetError::InsufficientPositives { needed: 9, available: 1 })
        ));
    }

    #[test]
    fn synthetic_classes_share_token_multisets() {
        let corpus = synth_corpus(400, 0.5, 11, PatternSet::default());
        let (train, test) = corpus.split_at(300);
        let acc = lexical_baseline_accuracy(train, test);
        assert!(acc <= 0.6, "lexical baseline reached {acc}");
    }
}
