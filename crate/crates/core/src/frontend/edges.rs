use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ast::NodeId;

/// Edge relation of the composite code graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "AST")]
    Ast,
    #[serde(rename = "CFG")]
    Cfg,
    #[serde(rename = "NCS")]
    Ncs,
    #[serde(rename = "DFG_R")]
    DfgR,
    #[serde(rename = "DFG_W")]
    DfgW,
    #[serde(rename = "DFG_C")]
    DfgC,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Ast,
        Relation::Cfg,
        Relation::Ncs,
        Relation::DfgR,
        Relation::DfgW,
        Relation::DfgC,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Ast => "AST",
            Relation::Cfg => "CFG",
            Relation::Ncs => "NCS",
            Relation::DfgR => "DFG_R",
            Relation::DfgW => "DFG_W",
            Relation::DfgC => "DFG_C",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown relation `{0}` (expected one of ast, cfg, ncs, dfg_r, dfg_w, dfg_c)")]
pub struct UnknownRelation(pub String);

impl FromStr for Relation {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownRelation(s.to_string()))
    }
}

/// Directed edges of one relation, kept sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    pub relation: Relation,
    edges: Vec<(NodeId, NodeId)>,
}

impl EdgeSet {
    /// Panics on a self-loop; builders are expected to filter them.
    pub fn new(relation: Relation, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut edges: Vec<_> = edges.into_iter().collect();
        assert!(
            edges.iter().all(|(s, t)| s != t),
            "{relation} edge set contains a self-loop"
        );
        edges.sort_unstable();
        edges.dedup();
        EdgeSet { relation, edges }
    }

    pub fn empty(relation: Relation) -> Self {
        EdgeSet { relation, edges: Vec::new() }
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, src: NodeId, dst: NodeId) -> bool {
        self.edges.binary_search(&(src, dst)).is_ok()
    }

    pub fn successors(&self, src: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let start = self.edges.partition_point(|&(s, _)| s < src);
        self.edges[start..].iter().take_while(move |&&(s, _)| s == src).map(|&(_, t)| t)
    }

    pub fn predecessors(&self, dst: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges.iter().filter(move |&&(_, t)| t == dst).map(|&(s, _)| s)
    }

    /// Every node id mentioned by some edge, sorted.
    pub fn vertices(&self) -> Vec<NodeId> {
        let mut v: Vec<_> = self.edges.iter().flat_map(|&(s, t)| [s, t]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}
