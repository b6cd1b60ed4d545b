//! Graph-level prediction heads.

pub mod conv;
pub mod flat;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conv::{conv_backward, conv_forward, conv_sigma, ConvGeometry, ConvHead, ConvPath, ConvTrace};
pub use flat::{flat_backward, flat_forward, FlatHead, FlatTrace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadoutError {
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("{cols} columns, at least {need} required")]
    TooFewColumns { cols: usize, need: usize },
    #[error("{rows} rows, at least {need} required")]
    TooFewRows { rows: usize, need: usize },
    #[error("graph has {0} nodes, above the readout capacity")]
    NodeCapExceeded(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutKind {
    Conv,
    Flat,
}

impl std::str::FromStr for ReadoutKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conv" => Ok(ReadoutKind::Conv),
            "flat" => Ok(ReadoutKind::Flat),
            other => Err(format!("unknown readout {other:?}, expected conv or flat")),
        }
    }
}

impl std::fmt::Display for ReadoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReadoutKind::Conv => "conv",
            ReadoutKind::Flat => "flat",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Conv(ConvHead),
    Flat(FlatHead),
}

impl Head {
    pub fn kind(&self) -> ReadoutKind {
        match self {
            Head::Conv(_) => ReadoutKind::Conv,
            Head::Flat(_) => ReadoutKind::Flat,
        }
    }
}
