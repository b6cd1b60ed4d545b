use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EmbeddingError;

pub const OOV: usize = 0;
pub const OOV_TOKEN: &str = "<oov>";

/// Token vocabulary ordered by descending frequency, ties broken
/// lexicographically. Index 0 is reserved for out-of-vocabulary tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabJson", into = "VocabJson")]
pub struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabJson {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabJson> for Vocab {
    fn from(v: VocabJson) -> Self {
        let index = v.tokens.iter().enumerate().skip(1).map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens: v.tokens, counts: v.counts, index }
    }
}

impl From<Vocab> for VocabJson {
    fn from(v: Vocab) -> Self {
        VocabJson { tokens: v.tokens, counts: v.counts }
    }
}

impl Vocab {
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<Self, EmbeddingError> {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for sentence in corpus {
            for tok in sentence {
                *freq.entry(tok.as_ref()).or_default() += 1;
            }
        }
        if freq.is_empty() {
            return Err(EmbeddingError::EmptyCorpus);
        }
        let mut entries: Vec<(&str, u64)> = freq.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens = vec![OOV_TOKEN.to_string()];
        let mut counts = vec![0];
        for (t, c) in entries {
            tokens.push(t.to_string());
            counts.push(c);
        }
        Ok(VocabJson { tokens, counts }.into())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    /// Index of `token`, or [`OOV`].
    pub fn get(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn encode<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<usize> {
        sentence.iter().map(|t| self.get(t.as_ref())).collect()
    }
}
