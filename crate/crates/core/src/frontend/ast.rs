use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub type NodeId = usize;

/// Syntactic category of an AST node.
///
/// `Operator` and `TypeName` are token leaves for operators and type keywords;
/// `Entry`/`Exit` are synthetic children of `Function` used by the CFG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    Function,
    ParamList,
    Param,
    Block,
    Decl,
    If,
    While,
    For,
    Return,
    Assign,
    BinaryExpr,
    UnaryExpr,
    Call,
    Identifier,
    Literal,
    Condition,
    Entry,
    Exit,
    Operator,
    TypeName,
}

impl NodeType {
    pub const ALL: [NodeType; 20] = [
        NodeType::Function,
        NodeType::ParamList,
        NodeType::Param,
        NodeType::Block,
        NodeType::Decl,
        NodeType::If,
        NodeType::While,
        NodeType::For,
        NodeType::Return,
        NodeType::Assign,
        NodeType::BinaryExpr,
        NodeType::UnaryExpr,
        NodeType::Call,
        NodeType::Identifier,
        NodeType::Literal,
        NodeType::Condition,
        NodeType::Entry,
        NodeType::Exit,
        NodeType::Operator,
        NodeType::TypeName,
    ];

    pub const COUNT: usize = Self::ALL.len();

    /// Position in [`NodeType::ALL`]; used for the one-hot type encoding.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Leaves that own exactly one source token.
    pub fn is_token_leaf(self) -> bool {
        matches!(
            self,
            NodeType::Identifier | NodeType::Literal | NodeType::Operator | NodeType::TypeName
        )
    }

    /// Statement-level nodes that become CFG vertices (besides conditions).
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            NodeType::Decl | NodeType::Assign | NodeType::Call | NodeType::Return
        )
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    /// Pre-order rank; the root is 0.
    pub id: NodeId,
    pub node_type: NodeType,
    pub code: String,
    pub children: Vec<NodeId>,
    /// Index of the owned token for token leaves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<usize>,
    /// Token index range covered by the whole subtree.
    #[serde(skip)]
    pub tokens: Range<usize>,
}

/// A parsed function. Node ids are dense pre-order indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    nodes: Vec<AstNode>,
    parents: Vec<Option<NodeId>>,
}

impl Ast {
    /// Builds an AST from nodes that are already numbered in pre-order.
    pub(crate) fn from_preorder(nodes: Vec<AstNode>) -> Self {
        let mut parents = vec![None; nodes.len()];
        for node in &nodes {
            for &child in &node.children {
                parents[child] = Some(node.id);
            }
        }
        Ast { nodes, parents }
    }

    pub fn root(&self) -> &AstNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents[id]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn node_type(&self, id: NodeId) -> NodeType {
        self.nodes[id].node_type
    }

    /// Token leaves in source order.
    pub fn token_leaves(&self) -> impl Iterator<Item = &AstNode> {
        self.nodes.iter().filter(|n| n.node_type.is_token_leaf())
    }

    pub fn find(&self, node_type: NodeType) -> Option<&AstNode> {
        self.nodes.iter().find(|n| n.node_type == node_type)
    }

    /// Whether `ancestor` lies on the path from `id` to the root (inclusive).
    pub fn is_ancestor(&self, ancestor: NodeId, mut id: NodeId) -> bool {
        loop {
            if id == ancestor {
                return true;
            }
            match self.parents[id] {
                Some(p) => id = p,
                None => return false,
            }
        }
    }

    /// Nodes of the subtree rooted at `id`, in pre-order.
    pub fn subtree(&self, id: NodeId) -> Range<NodeId> {
        let mut end = id + 1;
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            for &c in &self.nodes[n].children {
                end = end.max(c + 1);
                stack.push(c);
            }
        }
        id..end
    }

    pub fn entry(&self) -> NodeId {
        self.find(NodeType::Entry).expect("function has an entry node").id
    }

    pub fn exit(&self) -> NodeId {
        self.find(NodeType::Exit).expect("function has an exit node").id
    }
}
