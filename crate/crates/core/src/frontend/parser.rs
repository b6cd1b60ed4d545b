//! Recursive-descent parser for single function definitions.
//!
//! Grammar (one function per input):
//!
//! ```text
//! function  := type IDENT '(' params ')' block
//! params    := ε | 'void' | type IDENT (',' type IDENT)*
//! stmt      := block | decl ';' | assign ';' | call ';' | 'return' expr? ';'
//!            | 'if' '(' expr ')' stmt ('else' stmt)?
//!            | 'while' '(' expr ')' stmt
//!            | 'for' '(' (decl | assign)? ';' expr ';' assign? ')' stmt
//!            | ';'
//! decl      := type IDENT ('=' expr)?
//! assign    := IDENT '=' expr
//! expr      := binary expression over || && | ^ & == != < > <= >= << >> + - * / %
//!              with unary - + ! ~ and primaries IDENT, INT, call, '(' expr ')'
//! ```

use std::fmt;
use std::ops::Range;

use thiserror::Error;

use super::ast::{Ast, AstNode, NodeType};
use super::token::{Token, TokenKind, TYPE_KEYWORDS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unexpected {}, expected one of: {}", found_display(.found), .expected.join(", "))]
    Unexpected { found: Option<Token>, expected: Vec<String> },
    #[error("unsupported construct at offset {position}: {what}")]
    UnsupportedConstruct { position: usize, what: String },
}

fn found_display(found: &Option<Token>) -> String {
    match found {
        Some(t) => t.to_string(),
        None => "end of input".to_string(),
    }
}

impl ParseError {
    /// `None` means end of input.
    pub fn found(&self) -> Option<&Token> {
        match self {
            ParseError::Unexpected { found, .. } => found.as_ref(),
            ParseError::UnsupportedConstruct { .. } => None,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

#[derive(Debug)]
struct RawNode {
    node_type: NodeType,
    children: Vec<usize>,
    head: Range<usize>,
    tokens: Range<usize>,
    token: Option<usize>,
    code: Option<&'static str>,
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    raw: Vec<RawNode>,
}

pub fn parse_function(tokens: &[Token]) -> Result<Ast, ParseError> {
    let mut parser = Parser { tokens, pos: 0, raw: Vec::new() };
    let root = parser.function()?;
    if let Some(tok) = parser.peek() {
        return Err(ParseError::Unexpected {
            found: Some(tok.clone()),
            expected: vec!["end of input".into()],
        });
    }
    Ok(parser.finish(root))
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&'t Token> {
        self.tokens.get(self.pos + offset)
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.is(text))
    }

    fn at_type(&self) -> bool {
        self.peek()
            .is_some_and(|t| t.kind == TokenKind::Keyword && TYPE_KEYWORDS.contains(&t.text.as_str()))
    }

    fn offset(&self) -> usize {
        self.peek()
            .map(|t| t.span.start)
            .or_else(|| self.tokens.last().map(|t| t.span.end))
            .unwrap_or(0)
    }

    fn unexpected<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError::Unexpected {
            found: self.peek().cloned(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn unsupported<T>(&self, what: &str) -> PResult<T> {
        Err(ParseError::UnsupportedConstruct { position: self.offset(), what: what.to_string() })
    }

    fn expect(&mut self, text: &str) -> PResult<usize> {
        if self.at(text) {
            self.pos += 1;
            Ok(self.pos - 1)
        } else {
            self.unexpected(&[text])
        }
    }

    fn node(&mut self, node_type: NodeType, children: Vec<usize>, head: Range<usize>, tokens: Range<usize>) -> usize {
        self.raw.push(RawNode { node_type, children, head, tokens, token: None, code: None });
        self.raw.len() - 1
    }

    fn leaf(&mut self, node_type: NodeType, tok: usize) -> usize {
        self.raw.push(RawNode {
            node_type,
            children: Vec::new(),
            head: tok..tok + 1,
            tokens: tok..tok + 1,
            token: Some(tok),
            code: None,
        });
        self.raw.len() - 1
    }

    fn synthetic(&mut self, node_type: NodeType, code: &'static str) -> usize {
        let at = self.pos;
        self.raw.push(RawNode {
            node_type,
            children: Vec::new(),
            head: at..at,
            tokens: at..at,
            token: None,
            code: Some(code),
        });
        self.raw.len() - 1
    }

    fn ident(&mut self) -> PResult<usize> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(self.leaf(NodeType::Identifier, self.pos - 1))
            }
            _ => self.unexpected(&["identifier"]),
        }
    }

    fn type_spec(&mut self) -> PResult<Vec<usize>> {
        if !self.at_type() {
            return self.unexpected(&["type"]);
        }
        let mut leaves = Vec::new();
        while self.at_type() {
            self.pos += 1;
            leaves.push(self.leaf(NodeType::TypeName, self.pos - 1));
        }
        if self.at("*") {
            return self.unsupported("pointer types");
        }
        Ok(leaves)
    }

    fn function(&mut self) -> PResult<usize> {
        let start = self.pos;
        let mut children = self.type_spec()?;
        children.push(self.ident()?);
        if !self.at("(") {
            return self.unexpected(&["("]);
        }
        children.push(self.param_list()?);
        let head_end = self.pos;
        children.push(self.synthetic(NodeType::Entry, "ENTRY"));
        if !self.at("{") {
            return self.unexpected(&["{"]);
        }
        children.push(self.block()?);
        children.push(self.synthetic(NodeType::Exit, "EXIT"));
        Ok(self.node(NodeType::Function, children, start..head_end, start..self.pos))
    }

    fn param_list(&mut self) -> PResult<usize> {
        let start = self.expect("(")?;
        let mut params = Vec::new();
        if self.at("void") && self.peek_at(1).is_some_and(|t| t.is(")")) {
            self.pos += 1;
        } else if !self.at(")") {
            loop {
                let p_start = self.pos;
                let mut children = self.type_spec()?;
                if self.at("(") {
                    return self.unsupported("function pointer parameters");
                }
                children.push(self.ident()?);
                if self.at("[") {
                    return self.unsupported("array parameters");
                }
                params.push(self.node(NodeType::Param, children, p_start..self.pos, p_start..self.pos));
                if self.at(",") {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(self.node(NodeType::ParamList, params, start..self.pos, start..self.pos))
    }

    fn block(&mut self) -> PResult<usize> {
        let start = self.expect("{")?;
        let mut stmts = Vec::new();
        let mut terminated = false;
        loop {
            match self.peek() {
                None => return self.unexpected(&["}"]),
                Some(t) if t.is("}") => break,
                Some(t) if t.is(";") => {
                    self.pos += 1;
                }
                Some(_) => {
                    if terminated {
                        return self.unsupported("unreachable statement after return");
                    }
                    let stmt = self.statement()?;
                    terminated = self.always_returns(stmt);
                    stmts.push(stmt);
                }
            }
        }
        self.expect("}")?;
        Ok(self.node(NodeType::Block, stmts, start..start + 1, start..self.pos))
    }

    fn always_returns(&self, stmt: usize) -> bool {
        let node = &self.raw[stmt];
        match node.node_type {
            NodeType::Return => true,
            NodeType::Block => node.children.iter().any(|&c| self.always_returns(c)),
            NodeType::If => {
                node.children.len() == 3
                    && self.always_returns(node.children[1])
                    && self.always_returns(node.children[2])
            }
            _ => false,
        }
    }

    /// A statement used as the body of `if`/`while`/`for`.
    fn body(&mut self) -> PResult<usize> {
        if self.at(";") {
            let at = self.pos;
            self.pos += 1;
            return Ok(self.node(NodeType::Block, Vec::new(), at..at + 1, at..self.pos));
        }
        self.statement()
    }

    fn statement(&mut self) -> PResult<usize> {
        let Some(tok) = self.peek() else {
            return self.unexpected(&["statement"]);
        };
        match tok.text.as_str() {
            "{" => self.block(),
            "if" => self.if_stmt(),
            "while" => self.while_stmt(),
            "for" => self.for_stmt(),
            "return" => {
                let start = self.pos;
                self.pos += 1;
                let children = if self.at(";") { Vec::new() } else { vec![self.expr()?] };
                let end = self.pos;
                self.expect(";")?;
                Ok(self.node(NodeType::Return, children, start..end, start..self.pos))
            }
            _ if self.at_type() => {
                let decl = self.decl()?;
                self.expect(";")?;
                Ok(decl)
            }
            _ if tok.kind == TokenKind::Identifier => {
                let stmt = self.simple_statement()?;
                self.expect(";")?;
                Ok(stmt)
            }
            "else" => self.unexpected(&["statement"]),
            _ => self.unsupported(&format!("statement starting with `{}`", tok.text)),
        }
    }

    fn decl(&mut self) -> PResult<usize> {
        let start = self.pos;
        let mut children = self.type_spec()?;
        children.push(self.ident()?);
        if self.at("[") {
            return self.unsupported("array declarations");
        }
        if self.at("=") {
            self.pos += 1;
            children.push(self.leaf(NodeType::Operator, self.pos - 1));
            children.push(self.expr()?);
        }
        if self.at(",") {
            return self.unsupported("multiple declarators");
        }
        Ok(self.node(NodeType::Decl, children, start..self.pos, start..self.pos))
    }

    /// Assignment or call used as a statement.
    fn simple_statement(&mut self) -> PResult<usize> {
        let start = self.pos;
        match self.peek_at(1).map(|t| t.text.as_str()) {
            Some("=") => {
                let lhs = self.ident()?;
                self.pos += 1;
                let op = self.leaf(NodeType::Operator, self.pos - 1);
                let rhs = self.expr()?;
                Ok(self.node(NodeType::Assign, vec![lhs, op, rhs], start..self.pos, start..self.pos))
            }
            Some("(") => {
                let call = self.expr()?;
                if self.raw[call].node_type != NodeType::Call {
                    return self.unsupported("expression statement without effect");
                }
                Ok(call)
            }
            Some(op) if matches!(op, "++" | "--") || (op.len() >= 2 && op.ends_with('=') && !matches!(op, "==" | "!=" | "<=" | ">=")) => {
                self.unsupported("compound assignment and increment operators")
            }
            Some("[") => self.unsupported("array subscripts"),
            _ => self.unsupported("expression statement without effect"),
        }
    }

    fn condition(&mut self) -> PResult<usize> {
        let start = self.pos;
        let expr = self.expr()?;
        Ok(self.node(NodeType::Condition, vec![expr], start..self.pos, start..self.pos))
    }

    fn if_stmt(&mut self) -> PResult<usize> {
        let start = self.expect("if")?;
        self.expect("(")?;
        let cond = self.condition()?;
        self.expect(")")?;
        let head_end = self.pos;
        let mut children = vec![cond, self.body()?];
        if self.at("else") {
            self.pos += 1;
            children.push(self.body()?);
        }
        Ok(self.node(NodeType::If, children, start..head_end, start..self.pos))
    }

    fn while_stmt(&mut self) -> PResult<usize> {
        let start = self.expect("while")?;
        self.expect("(")?;
        let cond = self.condition()?;
        self.expect(")")?;
        let head_end = self.pos;
        let body = self.body()?;
        Ok(self.node(NodeType::While, vec![cond, body], start..head_end, start..self.pos))
    }

    fn for_stmt(&mut self) -> PResult<usize> {
        let start = self.expect("for")?;
        self.expect("(")?;
        let mut children = Vec::new();
        if self.at_type() {
            children.push(self.decl()?);
        } else if !self.at(";") {
            let init = self.simple_statement()?;
            if self.raw[init].node_type != NodeType::Assign {
                return self.unsupported("non-assignment for-loop initializer");
            }
            children.push(init);
        }
        self.expect(";")?;
        if self.at(";") {
            return self.unsupported("for loop without condition");
        }
        children.push(self.condition()?);
        self.expect(";")?;
        if !self.at(")") {
            let step = self.simple_statement()?;
            if self.raw[step].node_type != NodeType::Assign {
                return self.unsupported("non-assignment for-loop step");
            }
            children.push(step);
        }
        self.expect(")")?;
        let head_end = self.pos;
        let has_step = children.last().is_some_and(|&c| self.raw[c].node_type != NodeType::Condition);
        let body = self.body()?;
        if has_step && self.always_returns(body) {
            return self.unsupported("unreachable for-loop step");
        }
        children.push(body);
        Ok(self.node(NodeType::For, children, start..head_end, start..self.pos))
    }

    fn expr(&mut self) -> PResult<usize> {
        self.binary(0)
    }

    fn binary(&mut self, min_level: usize) -> PResult<usize> {
        const LEVELS: &[&[&str]] = &[
            &["||"],
            &["&&"],
            &["|"],
            &["^"],
            &["&"],
            &["==", "!="],
            &["<", ">", "<=", ">="],
            &["<<", ">>"],
            &["+", "-"],
            &["*", "/", "%"],
        ];
        if min_level == LEVELS.len() {
            return self.unary();
        }
        let start = self.pos;
        let mut lhs = self.binary(min_level + 1)?;
        while let Some(tok) = self.peek() {
            if tok.kind != TokenKind::Operator || !LEVELS[min_level].contains(&tok.text.as_str()) {
                break;
            }
            self.pos += 1;
            let op = self.leaf(NodeType::Operator, self.pos - 1);
            let rhs = self.binary(min_level + 1)?;
            lhs = self.node(NodeType::BinaryExpr, vec![lhs, op, rhs], start..self.pos, start..self.pos);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<usize> {
        let start = self.pos;
        match self.peek().map(|t| t.text.as_str()) {
            Some("-" | "+" | "!" | "~") => {
                self.pos += 1;
                let op = self.leaf(NodeType::Operator, start);
                let operand = self.unary()?;
                Ok(self.node(NodeType::UnaryExpr, vec![op, operand], start..self.pos, start..self.pos))
            }
            Some("*" | "&") => self.unsupported("pointer dereference or address-of"),
            Some("++" | "--") => self.unsupported("compound assignment and increment operators"),
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> PResult<usize> {
        let start = self.pos;
        let Some(tok) = self.peek() else {
            return self.unexpected(&["expression"]);
        };
        match tok.kind {
            TokenKind::IntLiteral => {
                self.pos += 1;
                Ok(self.leaf(NodeType::Literal, start))
            }
            TokenKind::Identifier => {
                let name = self.ident()?;
                if self.at("(") {
                    self.pos += 1;
                    let mut children = vec![name];
                    if !self.at(")") {
                        loop {
                            children.push(self.expr()?);
                            if self.at(",") {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(")")?;
                    return Ok(self.node(NodeType::Call, children, start..self.pos, start..self.pos));
                }
                if self.at("[") {
                    return self.unsupported("array subscripts");
                }
                if self.at("++") || self.at("--") {
                    return self.unsupported("compound assignment and increment operators");
                }
                Ok(name)
            }
            TokenKind::Punctuation if tok.is("(") => {
                self.pos += 1;
                if self.at_type() {
                    return self.unsupported("casts");
                }
                let inner = self.expr()?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => self.unexpected(&["expression"]),
        }
    }

    /// Renumbers the raw tree in pre-order and fills in node code.
    fn finish(self, root: usize) -> Ast {
        let mut order = Vec::with_capacity(self.raw.len());
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            order.push(n);
            stack.extend(self.raw[n].children.iter().rev());
        }
        let mut new_id = vec![usize::MAX; self.raw.len()];
        for (id, &raw) in order.iter().enumerate() {
            new_id[raw] = id;
        }
        let nodes = order
            .iter()
            .enumerate()
            .map(|(id, &raw)| {
                let r = &self.raw[raw];
                let code = match r.code {
                    Some(code) => code.to_string(),
                    None => self.tokens[r.head.clone()]
                        .iter()
                        .map(|t| t.text.as_str())
                        .collect::<Vec<_>>()
                        .join(" "),
                };
                AstNode {
                    id,
                    node_type: r.node_type,
                    code,
                    children: r.children.iter().map(|&c| new_id[c]).collect(),
                    token: r.token,
                    tokens: r.tokens.clone(),
                }
            })
            .collect();
        Ast::from_preorder(nodes)
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(ast: &Ast, id: usize, depth: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let node = ast.node(id);
            writeln!(f, "{:indent$}{} {:?} `{}`", "", id, node.node_type, node.code, indent = depth * 2)?;
            for &c in &node.children {
                go(ast, c, depth + 1, f)?;
            }
            Ok(())
        }
        go(self, 0, 0, f)
    }
}
