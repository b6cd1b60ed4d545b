//! Structural invariants of a code graph, each returning its violations.

use std::collections::{BTreeSet, VecDeque};

use vulngraph::frontend::{CodeGraph, NodeId, NodeType, Relation};

fn parents(graph: &CodeGraph) -> Vec<Vec<NodeId>> {
    let mut p = vec![Vec::new(); graph.num_nodes()];
    for &(s, d) in graph.edges(Relation::Ast).edges() {
        p[d].push(s);
    }
    p
}

/// `m − 1` edges, one parent per non-root node, every node reachable from
/// the root and parents preceding children.
pub fn ast_tree(graph: &CodeGraph) -> Vec<String> {
    let m = graph.num_nodes();
    let edges = graph.edges(Relation::Ast).edges();
    let mut v = Vec::new();
    if edges.len() + 1 != m {
        v.push(format!("AST has {} edges for {m} nodes", edges.len()));
    }
    for (node, ps) in parents(graph).iter().enumerate() {
        match (node, ps.len()) {
            (0, 0) => {}
            (0, n) => v.push(format!("root has {n} parents")),
            (_, 1) if ps[0] >= node => v.push(format!("parent {} of {node} does not precede it", ps[0])),
            (_, 1) => {}
            (_, n) => v.push(format!("node {node} has {n} parents")),
        }
    }
    let mut seen = vec![false; m];
    let mut queue = VecDeque::from([0]);
    while let Some(n) = queue.pop_front() {
        if std::mem::replace(&mut seen[n], true) {
            v.push(format!("node {n} reached twice"));
            continue;
        }
        queue.extend(graph.nodes[n].children.iter().copied());
    }
    if let Some(n) = seen.iter().position(|s| !s) {
        v.push(format!("node {n} unreachable from the root"));
    }
    v
}

fn reach(start: NodeId, next: impl Fn(NodeId) -> Vec<NodeId>) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for s in next(n) {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
    }
    seen
}

/// One entry without predecessors, one exit without successors, and every
/// vertex on some entry-to-exit path.
pub fn cfg_single_entry_exit(graph: &CodeGraph) -> Vec<String> {
    let cfg = graph.edges(Relation::Cfg);
    let of_type = |t: NodeType| graph.nodes.iter().filter(|n| n.node_type == t).map(|n| n.id).collect::<Vec<_>>();
    let (entries, exits) = (of_type(NodeType::Entry), of_type(NodeType::Exit));
    let mut v = Vec::new();
    if entries.len() != 1 || exits.len() != 1 {
        v.push(format!("{} entries and {} exits", entries.len(), exits.len()));
        return v;
    }
    let (entry, exit) = (entries[0], exits[0]);
    if cfg.predecessors(entry).next().is_some() {
        v.push("entry has a predecessor".into());
    }
    if cfg.successors(exit).next().is_some() {
        v.push("exit has a successor".into());
    }
    let forward = reach(entry, |n| cfg.successors(n).collect());
    let backward = reach(exit, |n| cfg.predecessors(n).collect());
    let mut vertices: BTreeSet<NodeId> = cfg.vertices().into_iter().collect();
    vertices.extend([entry, exit]);
    for &n in &vertices {
        if !forward.contains(&n) {
            v.push(format!("vertex {n} unreachable from entry"));
        }
        if !backward.contains(&n) {
            v.push(format!("vertex {n} cannot reach exit"));
        }
    }
    let ps = parents(graph);
    let is_vertex = |n: &vulngraph::frontend::AstNode| match n.node_type {
        NodeType::Decl | NodeType::Assign | NodeType::Return | NodeType::Condition => true,
        // Calls are vertices only in statement position.
        NodeType::Call => ps[n.id].first().is_some_and(|&p| {
            matches!(graph.nodes[p].node_type, NodeType::Block | NodeType::If | NodeType::While | NodeType::For)
        }),
        _ => false,
    };
    for n in graph.nodes.iter().filter(|n| is_vertex(n)) {
        if !vertices.contains(&n.id) {
            v.push(format!("{} node {} missing from the CFG", n.node_type, n.id));
        }
    }
    v
}

/// NCS links consecutive token leaves in source order and nothing else.
pub fn ncs_path(graph: &CodeGraph) -> Vec<String> {
    let mut leaves: Vec<(usize, NodeId)> =
        graph.nodes.iter().filter_map(|n| n.token.map(|t| (t, n.id))).collect();
    leaves.sort();
    let expected: BTreeSet<(NodeId, NodeId)> = leaves.windows(2).map(|w| (w[0].1, w[1].1)).collect();
    let found: BTreeSet<(NodeId, NodeId)> = graph.edges(Relation::Ncs).edges().iter().copied().collect();
    let mut v = Vec::new();
    for e in expected.difference(&found) {
        v.push(format!("NCS missing {e:?}"));
    }
    for e in found.difference(&expected) {
        v.push(format!("NCS has extra {e:?}"));
    }
    v
}

/// Both endpoints of every computed-from edge lie under one assignment.
pub fn dfg_c_locality(graph: &CodeGraph) -> Vec<String> {
    let ps = parents(graph);
    let assign_of = |mut n: NodeId| loop {
        if graph.nodes[n].node_type == NodeType::Assign {
            return Some(n);
        }
        n = *ps[n].first()?;
    };
    let mut v = Vec::new();
    for &(s, d) in graph.edges(Relation::DfgC).edges() {
        let a = assign_of(s);
        let b = assign_of(d);
        if a.is_none() || a != b {
            v.push(format!("DFG_C edge ({s}, {d}) spans {a:?} and {b:?}"));
        }
    }
    v
}

/// All four checks together.
pub fn all_violations(graph: &CodeGraph) -> Vec<String> {
    let mut v = ast_tree(graph);
    v.extend(cfg_single_entry_exit(graph));
    v.extend(ncs_path(graph));
    v.extend(dfg_c_locality(graph));
    v
}
