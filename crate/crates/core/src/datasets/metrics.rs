use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::frontend::Label;

/// Probability at or above which a function is called vulnerable.
pub const THRESHOLD: f64 = 0.5;

/// Binary classification metrics with the vulnerable class as positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let n = tp + fp + tn + fn_;
        EvalReport {
            accuracy: ratio(tp + tn, n),
            precision,
            recall,
            f1,
            tp,
            fp,
            tn,
            fn_,
            n,
            tag: None,
            config_hash: None,
        }
    }

    pub fn from_verdicts(labels: &[Label], predicted: &[Label]) -> Self {
        assert_eq!(labels.len(), predicted.len(), "one prediction per label");
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&y, &p) in labels.iter().zip(predicted) {
            match (y, p) {
                (Label::Vulnerable, Label::Vulnerable) => tp += 1,
                (Label::Benign, Label::Vulnerable) => fp += 1,
                (Label::Benign, Label::Benign) => tn += 1,
                (Label::Vulnerable, Label::Benign) => fn_ += 1,
            }
        }
        Self::from_counts(tp, fp, tn, fn_)
    }

    pub fn from_probabilities(labels: &[Label], probabilities: &[f64]) -> Self {
        let predicted: Vec<Label> = probabilities.iter().map(|&p| verdict(p)).collect();
        Self::from_verdicts(labels, &predicted)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = Some(hash.into());
        self
    }
}

pub fn verdict(probability: f64) -> Label {
    if probability >= THRESHOLD {
        Label::Vulnerable
    } else {
        Label::Benign
    }
}

/// Aligned text table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            [
                r.tag.clone().unwrap_or_else(|| "-".into()),
                format!("{:.2}", 100.0 * r.accuracy),
                format!("{:.2}", 100.0 * r.f1),
                format!("{:.2}", 100.0 * r.precision),
                format!("{:.2}", 100.0 * r.recall),
                format!("{}/{}/{}/{}", r.tp, r.fp, r.tn, r.fn_),
                r.n.to_string(),
                r.config_hash.clone().unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let header = ["model", "acc%", "f1%", "prec%", "rec%", "tp/fp/tn/fn", "n", "config"];
    let cols = header.len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let parts: Vec<String> = (0..cols)
            .map(|c| if c == 0 { format!("{:<w$}", cells[c], w = widths[c]) } else { format!("{:>w$}", cells[c], w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header, &mut out);
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
    for r in &rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&cells, &mut out);
    }
    out
}
