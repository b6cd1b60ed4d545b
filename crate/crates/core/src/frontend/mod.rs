//! C-subset front end: source text to composite code graph.

pub mod ast;
pub mod cfg;
pub mod dfg;
pub mod edges;
pub mod export;
pub mod graph;
pub mod parser;
pub mod token;

use thiserror::Error;

pub use ast::{Ast, AstNode, NodeId, NodeType};
pub use cfg::build_cfg;
pub use dfg::{build_dfg, DataFlowEdges, DfgError};
pub use edges::{EdgeSet, Relation};
pub use graph::{assemble_graph, ast_edges, build_ncs, source_hash, CodeGraph, GraphError, Label, MAX_NODES};
pub use parser::{parse_function, ParseError};
pub use token::{tokenize, LexError, Token, TokenKind};

/// Integer-overflow example used throughout the tests and docs.
pub const OVERFLOW_EXAMPLE: &str =
    "short add (short b) {\n    short a = 32767;\n    if (b > 0) {\n        a = a + b;\n    }\n    return a;\n}\n";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("lex error: {0}")]
    Lex(#[from] LexError),
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("data-flow error: {0}")]
    Dfg(#[from] DfgError),
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
}

pub fn parse_source(source: &str) -> Result<Ast, FrontendError> {
    Ok(parse_function(&tokenize(source)?)?)
}

/// Full pipeline from source to a graph with all six relations.
pub fn build_graph(source: &str, label: Option<Label>, max_nodes: usize) -> Result<CodeGraph, FrontendError> {
    let ast = parse_source(source)?;
    let cfg = build_cfg(&ast);
    let dfg = build_dfg(&ast, &cfg)?;
    let sets = [
        ast_edges(&ast),
        cfg,
        build_ncs(&ast),
        dfg.last_read,
        dfg.last_write,
        dfg.computed_from,
    ];
    Ok(assemble_graph(&ast, sets, label, source_hash(source), max_nodes)?)
}
