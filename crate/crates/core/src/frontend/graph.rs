use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ast::{Ast, AstNode, NodeId};
use super::edges::{EdgeSet, Relation};

/// Graphs larger than this are rejected.
pub const MAX_NODES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Benign,
    Vulnerable,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::Benign),
            1 => Some(Label::Vulnerable),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn target(self) -> f64 {
        f64::from(self.bit())
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.bit()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Label::from_bit(v).ok_or_else(|| format!("label out of range: {v}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("function has {0} nodes, above the cap")]
    NodeCapExceeded(usize),
    #[error("{relation} edge ({src}, {dst}) references a node outside 0..{nodes}")]
    DanglingEdge { relation: Relation, src: NodeId, dst: NodeId, nodes: usize },
}

/// A function as a multi-relation graph over its AST nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeGraph {
    pub nodes: Vec<AstNode>,
    /// Indexed by [`Relation::index`].
    pub edge_sets: [EdgeSet; 6],
    pub label: Option<Label>,
    pub source_hash: String,
}

impl CodeGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self, relation: Relation) -> &EdgeSet {
        &self.edge_sets[relation.index()]
    }

    /// Copy keeping only `relations`; the rest become empty.
    pub fn restricted_to(&self, relations: &[Relation]) -> CodeGraph {
        let mut g = self.clone();
        for r in Relation::ALL {
            if !relations.contains(&r) {
                g.edge_sets[r.index()] = EdgeSet::empty(r);
            }
        }
        g
    }
}

pub fn source_hash(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

pub fn ast_edges(ast: &Ast) -> EdgeSet {
    EdgeSet::new(
        Relation::Ast,
        ast.nodes().iter().flat_map(|n| n.children.iter().map(move |&c| (n.id, c))),
    )
}

/// Chains the AST's token leaves in source order.
pub fn build_ncs(ast: &Ast) -> EdgeSet {
    let leaves: Vec<NodeId> = ast.token_leaves().map(|n| n.id).collect();
    EdgeSet::new(Relation::Ncs, leaves.windows(2).map(|w| (w[0], w[1])))
}

/// Combines the AST and its relations; `edge_sets` may come in any order and
/// missing relations are left empty.
pub fn assemble_graph(
    ast: &Ast,
    edge_sets: impl IntoIterator<Item = EdgeSet>,
    label: Option<Label>,
    source_hash: String,
    max_nodes: usize,
) -> Result<CodeGraph, GraphError> {
    let m = ast.len();
    if m > max_nodes {
        return Err(GraphError::NodeCapExceeded(m));
    }
    let mut sets = Relation::ALL.map(EdgeSet::empty);
    for set in edge_sets {
        if let Some(&(src, dst)) = set.edges().iter().find(|&&(s, t)| s >= m || t >= m) {
            return Err(GraphError::DanglingEdge { relation: set.relation, src, dst, nodes: m });
        }
        let idx = set.relation.index();
        sets[idx] = set;
    }
    Ok(CodeGraph { nodes: ast.nodes().to_vec(), edge_sets: sets, label, source_hash })
}
