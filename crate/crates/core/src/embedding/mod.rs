//! Initial node features: code-token embeddings plus a node-type one-hot.

pub mod skipgram;
pub mod table;
pub mod vocab;

use ndarray::{s, Array2};
use thiserror::Error;

use crate::frontend::{tokenize, CodeGraph, LexError, NodeType};

pub use skipgram::{train_skipgram, SkipGram, SkipGramConfig};
pub use table::EmbeddingTable;
pub use vocab::{Vocab, OOV, OOV_TOKEN};

/// Rows are nodes, columns are `d_code` embedding values then one type one-hot.
pub type NodeFeatureMatrix = Array2<f64>;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("hidden size {z} is smaller than feature size {d}")]
    HiddenTooSmall { z: usize, d: usize },
    #[error("malformed embedding file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn feature_dim(d_code: usize) -> usize {
    d_code + NodeType::COUNT
}

/// Lexer token texts of one source file, as a training sentence.
pub fn source_tokens(source: &str) -> Result<Vec<String>, EmbeddingError> {
    Ok(tokenize(source)?.into_iter().map(|t| t.text).collect())
}

/// Vocabulary ids of the whitespace-separated tokens in each node's code.
pub fn node_token_ids(graph: &CodeGraph, vocab: &Vocab) -> Vec<Vec<usize>> {
    graph.nodes.iter().map(|n| n.code.split_whitespace().map(|t| vocab.get(t)).collect()).collect()
}

/// Builds X from precomputed token ids. A node with no code tokens gets a
/// zero code block.
pub fn features_from_ids(ids: &[Vec<usize>], types: &[NodeType], table: &Array2<f64>) -> NodeFeatureMatrix {
    let d_code = table.ncols();
    let mut x = Array2::zeros((ids.len(), feature_dim(d_code)));
    for (j, (toks, ty)) in ids.iter().zip(types).enumerate() {
        if !toks.is_empty() {
            let mut code = x.slice_mut(s![j, ..d_code]);
            for &t in toks {
                code += &table.row(t);
            }
            code /= toks.len() as f64;
        }
        x[[j, d_code + ty.index()]] = 1.0;
    }
    x
}

pub fn encode_nodes(graph: &CodeGraph, vocab: &Vocab, table: &EmbeddingTable) -> NodeFeatureMatrix {
    let types: Vec<NodeType> = graph.nodes.iter().map(|n| n.node_type).collect();
    features_from_ids(&node_token_ids(graph, vocab), &types, table.matrix())
}

/// Copies X into the first columns of a zero `m × z` matrix.
pub fn init_hidden(x: &NodeFeatureMatrix, z: usize) -> Result<Array2<f64>, EmbeddingError> {
    let d = x.ncols();
    if z < d {
        return Err(EmbeddingError::HiddenTooSmall { z, d });
    }
    let mut h = Array2::zeros((x.nrows(), z));
    h.slice_mut(s![.., ..d]).assign(x);
    Ok(h)
}
