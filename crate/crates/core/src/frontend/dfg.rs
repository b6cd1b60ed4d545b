//! Data-flow relations over identifier occurrences.
//!
//! * `DFG_R` (last read): occurrence → each read of the same variable that
//!   immediately precedes it on some CFG path.
//! * `DFG_W` (last write): occurrence → each reaching write of the variable.
//! * `DFG_C` (computed from): assignment target → each variable read in the
//!   right-hand side.
//!
//! Last-read and last-write are both solved as forward may-analyses to a
//! fixpoint over the CFG, so loop back-edges contribute edges. Within one CFG
//! vertex, accesses are ordered by evaluation: right-hand side reads before
//! the write of the target.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use super::ast::{Ast, NodeId, NodeType};
use super::cfg::ForParts;
use super::edges::{EdgeSet, Relation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DfgError {
    #[error("unresolved variable `{name}` (node {node})")]
    UnresolvedVariable { name: String, node: NodeId },
    #[error("declaration of `{name}` (node {node}) shadows or redeclares a visible variable")]
    Shadowing { name: String, node: NodeId },
}

/// Variables are identified by the node id of their declaring identifier.
pub type VarId = NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
    /// Start of a variable's lifetime; forgets earlier reads and writes.
    Declare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub occurrence: NodeId,
    pub var: VarId,
    pub kind: AccessKind,
}

/// Ordered variable accesses performed by each CFG vertex.
#[derive(Debug, Clone, Default)]
pub struct AccessMap {
    pub by_vertex: BTreeMap<NodeId, Vec<Access>>,
    /// Resolution of every variable occurrence to its declaration.
    pub resolution: BTreeMap<NodeId, VarId>,
}

impl AccessMap {
    pub fn of(&self, vertex: NodeId) -> &[Access] {
        self.by_vertex.get(&vertex).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFlowEdges {
    pub last_read: EdgeSet,
    pub last_write: EdgeSet,
    pub computed_from: EdgeSet,
}

pub fn build_dfg(ast: &Ast, cfg: &EdgeSet) -> Result<DataFlowEdges, DfgError> {
    let accesses = collect_accesses(ast)?;
    let last_read = solve(ast, cfg, &accesses, Relation::DfgR, AccessKind::Read);
    let last_write = solve(ast, cfg, &accesses, Relation::DfgW, AccessKind::Write);
    let computed_from = computed_from(ast, &accesses);
    Ok(DataFlowEdges { last_read, last_write, computed_from })
}

/// Resolves identifiers and lists the accesses of every CFG vertex.
pub fn collect_accesses(ast: &Ast) -> Result<AccessMap, DfgError> {
    let mut c = Collector { ast, scopes: vec![HashMap::new()], map: AccessMap::default() };
    let entry = ast.entry();
    c.map.by_vertex.insert(entry, Vec::new());
    for &child in ast.children(0) {
        match ast.node_type(child) {
            NodeType::ParamList => {
                for &param in ast.children(child) {
                    let name = *ast.children(param).last().expect("param has a name");
                    let var = c.declare(name)?;
                    let acc = c.map.by_vertex.get_mut(&entry).expect("entry present");
                    acc.push(Access { occurrence: name, var, kind: AccessKind::Declare });
                    acc.push(Access { occurrence: name, var, kind: AccessKind::Write });
                }
            }
            NodeType::Block => c.statement(child)?,
            _ => {}
        }
    }
    Ok(c.map)
}

struct Collector<'a> {
    ast: &'a Ast,
    scopes: Vec<HashMap<&'a str, VarId>>,
    map: AccessMap,
}

impl<'a> Collector<'a> {
    fn name(&self, ident: NodeId) -> &'a str {
        &self.ast.node(ident).code
    }

    fn declare(&mut self, ident: NodeId) -> Result<VarId, DfgError> {
        let name = self.name(ident);
        if self.scopes.iter().any(|s| s.contains_key(name)) {
            return Err(DfgError::Shadowing { name: name.to_string(), node: ident });
        }
        self.scopes.last_mut().expect("scope stack non-empty").insert(name, ident);
        self.map.resolution.insert(ident, ident);
        Ok(ident)
    }

    fn resolve(&mut self, ident: NodeId) -> Result<VarId, DfgError> {
        let name = self.name(ident);
        let var = self
            .scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .ok_or_else(|| DfgError::UnresolvedVariable { name: name.to_string(), node: ident })?;
        self.map.resolution.insert(ident, var);
        Ok(var)
    }

    /// Reads of every variable occurrence under `expr`, in evaluation order.
    fn reads(&mut self, expr: NodeId, out: &mut Vec<Access>) -> Result<(), DfgError> {
        let ast = self.ast;
        match ast.node_type(expr) {
            NodeType::Identifier => {
                let var = self.resolve(expr)?;
                out.push(Access { occurrence: expr, var, kind: AccessKind::Read });
            }
            // First child is the callee name.
            NodeType::Call => {
                for &arg in &ast.children(expr)[1..] {
                    self.reads(arg, out)?;
                }
            }
            _ => {
                for &child in ast.children(expr) {
                    self.reads(child, out)?;
                }
            }
        }
        Ok(())
    }

    fn vertex(&mut self, vertex: NodeId, accesses: Vec<Access>) {
        self.map.by_vertex.insert(vertex, accesses);
    }

    fn statement(&mut self, stmt: NodeId) -> Result<(), DfgError> {
        let ast = self.ast;
        let children = ast.children(stmt);
        match ast.node_type(stmt) {
            NodeType::Block => {
                self.scopes.push(HashMap::new());
                for &s in children {
                    self.statement(s)?;
                }
                self.scopes.pop();
            }
            NodeType::Decl => {
                let name = *children
                    .iter()
                    .find(|&&c| ast.node_type(c) == NodeType::Identifier)
                    .expect("declaration names a variable");
                let var = self.declare(name)?;
                let mut acc = Vec::new();
                let init = children.iter().position(|&c| ast.node_type(c) == NodeType::Operator);
                if let Some(eq) = init {
                    self.reads(children[eq + 1], &mut acc)?;
                }
                acc.push(Access { occurrence: name, var, kind: AccessKind::Declare });
                if init.is_some() {
                    acc.push(Access { occurrence: name, var, kind: AccessKind::Write });
                }
                self.vertex(stmt, acc);
            }
            NodeType::Assign => {
                let (lhs, rhs) = (children[0], children[2]);
                let mut acc = Vec::new();
                self.reads(rhs, &mut acc)?;
                let var = self.resolve(lhs)?;
                acc.push(Access { occurrence: lhs, var, kind: AccessKind::Write });
                self.vertex(stmt, acc);
            }
            NodeType::Call | NodeType::Return => {
                let mut acc = Vec::new();
                self.reads(stmt, &mut acc)?;
                self.vertex(stmt, acc);
            }
            NodeType::If => {
                self.condition(children[0])?;
                for &branch in &children[1..] {
                    self.scoped_statement(branch)?;
                }
            }
            NodeType::While => {
                self.condition(children[0])?;
                self.scoped_statement(children[1])?;
            }
            NodeType::For => {
                let parts = ForParts::of(ast, stmt);
                self.scopes.push(HashMap::new());
                if let Some(init) = parts.init {
                    self.statement(init)?;
                }
                self.condition(parts.cond)?;
                if let Some(step) = parts.step {
                    self.statement(step)?;
                }
                self.scoped_statement(parts.body)?;
                self.scopes.pop();
            }
            other => unreachable!("{other:?} is not a statement"),
        }
        Ok(())
    }

    /// Branch and loop bodies get their own scope even without braces.
    fn scoped_statement(&mut self, stmt: NodeId) -> Result<(), DfgError> {
        self.scopes.push(HashMap::new());
        let result = self.statement(stmt);
        self.scopes.pop();
        result
    }

    fn condition(&mut self, cond: NodeId) -> Result<(), DfgError> {
        let mut acc = Vec::new();
        self.reads(cond, &mut acc)?;
        self.vertex(cond, acc);
        Ok(())
    }
}

type Facts = BTreeMap<VarId, BTreeSet<NodeId>>;

fn transfer(facts: &mut Facts, accesses: &[Access], gen: AccessKind, mut on_access: impl FnMut(&Access, &Facts)) {
    for access in accesses {
        match access.kind {
            AccessKind::Declare => {
                facts.remove(&access.var);
            }
            kind => {
                on_access(access, facts);
                if kind == gen {
                    facts.insert(access.var, BTreeSet::from([access.occurrence]));
                }
            }
        }
    }
}

fn join(into: &mut Facts, from: &Facts) -> bool {
    let mut changed = false;
    for (var, occs) in from {
        let entry = into.entry(*var).or_default();
        for &o in occs {
            changed |= entry.insert(o);
        }
    }
    changed
}

/// Worklist fixpoint of a "most recent access of kind `gen`" analysis; emits an
/// edge from every access to each fact live for its variable just before it.
fn solve(ast: &Ast, cfg: &EdgeSet, accesses: &AccessMap, relation: Relation, gen: AccessKind) -> EdgeSet {
    let entry = ast.entry();
    let mut vertices = cfg.vertices();
    if vertices.is_empty() {
        vertices.push(entry);
    }
    let mut inputs: BTreeMap<NodeId, Facts> = vertices.iter().map(|&v| (v, Facts::new())).collect();
    let mut worklist: BTreeSet<NodeId> = vertices.iter().copied().collect();

    while let Some(v) = worklist.pop_first() {
        let mut out = inputs[&v].clone();
        transfer(&mut out, accesses.of(v), gen, |_, _| {});
        for succ in cfg.successors(v) {
            let target = inputs.get_mut(&succ).expect("successor is a vertex");
            if join(target, &out) {
                worklist.insert(succ);
            }
        }
    }

    let mut edges = Vec::new();
    for (&v, facts) in &inputs {
        let mut facts = facts.clone();
        transfer(&mut facts, accesses.of(v), gen, |access, live| {
            if let Some(prev) = live.get(&access.var) {
                edges.extend(
                    prev.iter()
                        .filter(|&&p| p != access.occurrence)
                        .map(|&p| (access.occurrence, p)),
                );
            }
        });
    }
    EdgeSet::new(relation, edges)
}

fn computed_from(ast: &Ast, accesses: &AccessMap) -> EdgeSet {
    let mut edges = Vec::new();
    for node in ast.nodes().iter().filter(|n| n.node_type == NodeType::Assign) {
        let lhs = node.children[0];
        for acc in accesses.of(node.id) {
            if acc.kind == AccessKind::Read && acc.occurrence != lhs {
                edges.push((lhs, acc.occurrence));
            }
        }
    }
    EdgeSet::new(Relation::DfgC, edges)
}
