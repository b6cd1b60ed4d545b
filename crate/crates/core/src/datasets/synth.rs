//! Synthetic labelled functions.
//!
//! Every function contains two `if` blocks over the parameter `b`: one with
//! the non-bounding guard `b > 0` and one with the bounding guard `b < K`.
//! The accumulation `a = a + b` sits inside the first block for vulnerable
//! functions and inside the second for benign ones. Both classes therefore
//! share the same token multiset and the same multiset of node codes; only
//! the structure tells them apart.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusRecord;
use crate::frontend::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSet {
    /// Unbounded addition of a `short` parameter.
    #[default]
    IntegerOverflow,
}

const NAMES: &[&str] = &["add", "accumulate", "update", "step", "advance", "combine", "apply", "mix"];
const INITS: &[&str] = &["32767", "32000", "30000", "16384"];
const BOUNDS: &[&str] = &["100", "127", "1000"];

fn filler(rng: &mut ChaCha8Rng) -> &'static str {
    const STATEMENTS: &[&str] = &[
        "c = c + 1;",
        "d = c * 2;",
        "d = d - c;",
        "c = d / 3;",
        "log(c);",
        "while (d > 1) { d = d - 1; }",
    ];
    STATEMENTS.choose(rng).expect("non-empty")
}

fn fillers(rng: &mut ChaCha8Rng, max: usize, indent: &str) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| format!("{indent}{}\n", filler(rng))).collect()
}

/// One function of the given class.
pub fn generate_function(label: Label, rng: &mut ChaCha8Rng) -> String {
    let name = NAMES.choose(rng).expect("non-empty");
    let init = INITS.choose(rng).expect("non-empty");
    let bound = BOUNDS.choose(rng).expect("non-empty");
    let two_params = rng.gen_bool(0.5);

    let mut src = String::new();
    if two_params {
        src.push_str(&format!("short {name}(short b, short c) {{\n"));
        src.push_str(&format!("    short a = {init};\n"));
    } else {
        src.push_str(&format!("short {name}(short b) {{\n"));
        src.push_str(&format!("    short a = {init};\n    short c = 0;\n"));
    }
    src.push_str("    short d = 1;\n");
    src.push_str(&fillers(rng, 2, "    "));

    let sink_block = format!(
        "{}        a = a + b;\n{}",
        fillers(rng, 1, "        "),
        fillers(rng, 1, "        ")
    );
    let other_block = fillers(rng, 2, "        ");
    let unsafe_guard = "b > 0".to_string();
    let safe_guard = format!("b < {bound}");
    let (sink_guard, other_guard) = match label {
        Label::Vulnerable => (unsafe_guard, safe_guard),
        Label::Benign => (safe_guard, unsafe_guard),
    };
    let sink_if = format!("    if ({sink_guard}) {{\n{sink_block}    }}\n");
    let other_if = format!("    if ({other_guard}) {{\n{other_block}    }}\n");
    let middle = fillers(rng, 1, "    ");
    if rng.gen_bool(0.5) {
        src.push_str(&sink_if);
        src.push_str(&middle);
        src.push_str(&other_if);
    } else {
        src.push_str(&other_if);
        src.push_str(&middle);
        src.push_str(&sink_if);
    }
    src.push_str(&fillers(rng, 2, "    "));
    src.push_str("    return a;\n}\n");
    src
}

/// `n` functions of which exactly `round(n * vuln_fraction)` are vulnerable,
/// in shuffled order.
pub fn synth_corpus(n: usize, vuln_fraction: f64, seed: u64, pattern_set: PatternSet) -> Vec<CorpusRecord> {
    assert!(n >= 2, "need at least two functions");
    assert!(vuln_fraction > 0.0 && vuln_fraction < 1.0, "vuln_fraction must be in (0, 1)");
    let PatternSet::IntegerOverflow = pattern_set;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = ((n as f64) * vuln_fraction).round() as usize;
    let mut labels: Vec<Label> =
        (0..n).map(|i| if i < positives { Label::Vulnerable } else { Label::Benign }).collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| CorpusRecord {
            id: format!("synth-{seed}-{i:05}"),
            project: "synthetic".into(),
            label,
            code: generate_function(label, &mut rng),
        })
        .collect()
}
