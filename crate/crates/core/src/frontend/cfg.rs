//! Control-flow edges between statement and condition nodes.
//!
//! Vertices are `Entry`, `Exit`, statement nodes (`Decl`, `Assign`, `Call`,
//! `Return`) and the `Condition` child of every branch or loop. The edges are
//! built back to front: each statement is lowered given the vertex control
//! reaches after it.

use super::ast::{Ast, NodeId, NodeType};
use super::edges::{EdgeSet, Relation};

pub fn build_cfg(ast: &Ast) -> EdgeSet {
    let mut builder = CfgBuilder { ast, edges: Vec::new(), exit: ast.exit() };
    let body = ast
        .root()
        .children
        .iter()
        .copied()
        .find(|&c| ast.node_type(c) == NodeType::Block)
        .expect("function has a body");
    let first = builder.lower(body, builder.exit);
    builder.edge(ast.entry(), first);
    EdgeSet::new(Relation::Cfg, builder.edges)
}

struct CfgBuilder<'a> {
    ast: &'a Ast,
    edges: Vec<(NodeId, NodeId)>,
    exit: NodeId,
}

impl CfgBuilder<'_> {
    fn edge(&mut self, src: NodeId, dst: NodeId) {
        // `while (c) ;` would loop the condition onto itself.
        if src != dst {
            self.edges.push((src, dst));
        }
    }

    /// Lowers `stmt` so that control continues at `next`; returns the first
    /// vertex executed.
    fn lower(&mut self, stmt: NodeId, next: NodeId) -> NodeId {
        let ast = self.ast;
        let children = ast.children(stmt);
        match ast.node_type(stmt) {
            NodeType::Block => children.iter().rev().fold(next, |succ, &s| self.lower(s, succ)),
            NodeType::Return => {
                self.edge(stmt, self.exit);
                stmt
            }
            NodeType::Decl | NodeType::Assign | NodeType::Call => {
                self.edge(stmt, next);
                stmt
            }
            NodeType::If => {
                let cond = children[0];
                let then_first = self.lower(children[1], next);
                let else_first = match children.get(2) {
                    Some(&else_branch) => self.lower(else_branch, next),
                    None => next,
                };
                self.edge(cond, then_first);
                self.edge(cond, else_first);
                cond
            }
            NodeType::While => {
                let cond = children[0];
                let body_first = self.lower(children[1], cond);
                self.edge(cond, body_first);
                self.edge(cond, next);
                cond
            }
            NodeType::For => {
                let parts = ForParts::of(ast, stmt);
                let loop_back = match parts.step {
                    Some(step) => {
                        self.edge(step, parts.cond);
                        step
                    }
                    None => parts.cond,
                };
                let body_first = self.lower(parts.body, loop_back);
                self.edge(parts.cond, body_first);
                self.edge(parts.cond, next);
                match parts.init {
                    Some(init) => {
                        self.edge(init, parts.cond);
                        init
                    }
                    None => parts.cond,
                }
            }
            other => unreachable!("{other:?} is not a statement"),
        }
    }
}

/// Children of a `For` node by role.
#[derive(Debug, Clone, Copy)]
pub struct ForParts {
    pub init: Option<NodeId>,
    pub cond: NodeId,
    pub step: Option<NodeId>,
    pub body: NodeId,
}

impl ForParts {
    pub fn of(ast: &Ast, for_node: NodeId) -> Self {
        let children = ast.children(for_node);
        let c = children
            .iter()
            .position(|&n| ast.node_type(n) == NodeType::Condition)
            .expect("for loop has a condition");
        let body = *children.last().expect("for loop has a body");
        ForParts {
            init: children[..c].first().copied(),
            cond: children[c],
            step: if children.len() - c == 3 { Some(children[c + 1]) } else { None },
            body,
        }
    }
}
