//! Last-read and last-write edges by enumerating every acyclic CFG path.
//!
//! Variables are identified by name, which is exact for functions from
//! [`crate::programs`] because every declaration there has a fresh name.

use std::collections::{BTreeSet, HashMap};

use vulngraph::frontend::{Ast, EdgeSet, NodeId, NodeType};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathDataflow {
    pub last_read: BTreeSet<(NodeId, NodeId)>,
    pub last_write: BTreeSet<(NodeId, NodeId)>,
    pub paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Read,
    Write,
}

/// Identifier occurrences under `node` in source order, callee names excluded.
fn reads(ast: &Ast, node: NodeId, out: &mut Vec<(NodeId, Kind)>) {
    let n = ast.node(node);
    match n.node_type {
        NodeType::Identifier => out.push((node, Kind::Read)),
        NodeType::Call => {
            for &c in &n.children[1..] {
                reads(ast, c, out);
            }
        }
        _ => {
            for &c in &n.children {
                reads(ast, c, out);
            }
        }
    }
}

fn accesses(ast: &Ast, vertex: NodeId) -> Vec<(NodeId, Kind)> {
    let n = ast.node(vertex);
    let mut out = Vec::new();
    match n.node_type {
        NodeType::Entry => {
            for &top in &ast.root().children {
                if ast.node_type(top) == NodeType::ParamList {
                    for &param in ast.children(top) {
                        let name = *ast.children(param).last().expect("named parameter");
                        out.push((name, Kind::Write));
                    }
                }
            }
        }
        NodeType::Decl => {
            let kids = &n.children;
            if let Some(eq) = kids.iter().position(|&c| ast.node_type(c) == NodeType::Operator) {
                reads(ast, kids[eq + 1], &mut out);
                let name = kids[..eq].iter().rev().find(|&&c| ast.node_type(c) == NodeType::Identifier);
                out.push((*name.expect("declared name"), Kind::Write));
            }
        }
        NodeType::Assign => {
            reads(ast, n.children[2], &mut out);
            out.push((n.children[0], Kind::Write));
        }
        NodeType::Call | NodeType::Return | NodeType::Condition => reads(ast, vertex, &mut out),
        _ => {}
    }
    out
}

/// Returns `None` when the CFG has a cycle or more than `max_paths` paths.
pub fn all_paths_dataflow(ast: &Ast, cfg: &EdgeSet, max_paths: usize) -> Option<PathDataflow> {
    let entry = ast.entry();
    let mut result = PathDataflow::default();
    let mut stack: Vec<NodeId> = vec![entry];
    let mut on_path: BTreeSet<NodeId> = BTreeSet::from([entry]);
    let ok = walk(ast, cfg, &mut stack, &mut on_path, &mut result, max_paths);
    ok.then_some(result)
}

fn walk(
    ast: &Ast,
    cfg: &EdgeSet,
    stack: &mut Vec<NodeId>,
    on_path: &mut BTreeSet<NodeId>,
    result: &mut PathDataflow,
    max_paths: usize,
) -> bool {
    let last = *stack.last().expect("non-empty path");
    let succs: Vec<NodeId> = cfg.successors(last).collect();
    if succs.is_empty() {
        result.paths += 1;
        if result.paths > max_paths {
            return false;
        }
        replay(ast, stack, result);
        return true;
    }
    for s in succs {
        if !on_path.insert(s) {
            return false;
        }
        stack.push(s);
        let ok = walk(ast, cfg, stack, on_path, result, max_paths);
        stack.pop();
        on_path.remove(&s);
        if !ok {
            return false;
        }
    }
    true
}

fn replay(ast: &Ast, path: &[NodeId], result: &mut PathDataflow) {
    let mut last_read: HashMap<&str, NodeId> = HashMap::new();
    let mut last_write: HashMap<&str, NodeId> = HashMap::new();
    for &v in path {
        for (occ, kind) in accesses(ast, v) {
            let name = ast.node(occ).code.as_str();
            if let Some(&w) = last_write.get(name) {
                if w != occ {
                    result.last_write.insert((occ, w));
                }
            }
            if let Some(&r) = last_read.get(name) {
                if r != occ {
                    result.last_read.insert((occ, r));
                }
            }
            match kind {
                Kind::Read => last_read.insert(name, occ),
                Kind::Write => last_write.insert(name, occ),
            };
        }
    }
}
