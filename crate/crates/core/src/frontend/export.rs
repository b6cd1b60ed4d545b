//! JSON and Graphviz renderings of a [`CodeGraph`].
//!
//! JSON layout:
//!
//! ```json
//! {
//!   "nodes": [{"id": 0, "type": "Function", "code": "...", "children": [1, 2]}],
//!   "edges": {"AST": [[0, 1]], "CFG": [], "NCS": [], "DFG_R": [], "DFG_W": [], "DFG_C": []},
//!   "label": 1,
//!   "source_hash": "<sha256 hex>"
//! }
//! ```
//!
//! `edges` only lists the relations that were requested.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ast::{AstNode, NodeId, NodeType};
use super::edges::{EdgeSet, Relation};
use super::graph::{CodeGraph, Label};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub code: String,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<NodeJson>,
    pub edges: BTreeMap<Relation, Vec<[NodeId; 2]>>,
    pub label: Option<Label>,
    pub source_hash: String,
}

impl GraphJson {
    pub fn from_graph(graph: &CodeGraph, relations: &[Relation]) -> Self {
        GraphJson {
            nodes: graph
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id,
                    node_type: n.node_type,
                    code: n.code.clone(),
                    children: n.children.clone(),
                })
                .collect(),
            edges: relations
                .iter()
                .map(|&r| (r, graph.edges(r).edges().iter().map(|&(s, t)| [s, t]).collect()))
                .collect(),
            label: graph.label,
            source_hash: graph.source_hash.clone(),
        }
    }

    /// Rebuilds a graph; relations absent from the JSON are empty.
    pub fn into_graph(self) -> CodeGraph {
        let mut edge_sets = Relation::ALL.map(EdgeSet::empty);
        for (r, edges) in self.edges {
            edge_sets[r.index()] = EdgeSet::new(r, edges.into_iter().map(|[s, t]| (s, t)));
        }
        CodeGraph {
            nodes: self
                .nodes
                .into_iter()
                .map(|n| AstNode {
                    id: n.id,
                    node_type: n.node_type,
                    code: n.code,
                    children: n.children,
                    token: None,
                    tokens: 0..0,
                })
                .collect(),
            edge_sets,
            label: self.label,
            source_hash: self.source_hash,
        }
    }
}

pub fn to_json(graph: &CodeGraph, relations: &[Relation]) -> serde_json::Value {
    serde_json::to_value(GraphJson::from_graph(graph, relations)).expect("graph json is serializable")
}

pub fn relation_color(relation: Relation) -> &'static str {
    match relation {
        Relation::Ast => "purple",
        Relation::Cfg => "green",
        Relation::Ncs => "red",
        Relation::DfgR => "orange",
        Relation::DfgW => "darkorange4",
        Relation::DfgC => "blue",
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering with one color per relation and a legend cluster.
pub fn to_dot(graph: &CodeGraph, relations: &[Relation]) -> String {
    let mut out = String::from("digraph code_graph {\n  node [shape=box, fontname=\"monospace\"];\n");
    for n in &graph.nodes {
        let fill = if n.node_type.is_token_leaf() { ", style=filled, fillcolor=lightblue" } else { "" };
        let _ = writeln!(
            out,
            "  n{} [label=\"{}\\n{}\"{}];",
            n.id,
            escape(&n.code),
            n.node_type,
            fill
        );
    }
    for &r in relations {
        let style = if r == Relation::Cfg { ", style=dashed" } else { "" };
        for &(s, t) in graph.edges(r).edges() {
            let _ = writeln!(out, "  n{s} -> n{t} [color={}{style}];", relation_color(r));
        }
    }
    out.push_str("  subgraph cluster_legend {\n    label=\"relations\";\n");
    for &r in relations {
        let _ = writeln!(
            out,
            "    legend_{0} [shape=plaintext, label=\"{0}\", fontcolor={1}];",
            r.name(),
            relation_color(r)
        );
    }
    out.push_str("  }\n}\n");
    out
}
