//! Symbol expressions: parsing, evaluation and exact partial derivatives.
//!
//! Symbols are smooth real functions on a chart of `R^{2n}` written in a small
//! expression language over the coordinates `x1..xn, y1..yn`. Points are
//! interleaved `(x1, y1, ..., xn, yn)`. See [`parser`] for the grammar.

mod ast;
mod diff;
pub mod parser;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use ast::{Func, Node, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymbolError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("unknown variable '{name}' at byte {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("dimension mismatch: expected {expected} coordinates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("domain error in '{node}' (argument {argument})")]
    Domain { node: String, argument: f64 },
    #[error("variable {0} has no value")]
    UnboundVariable(String),
    #[error("symbol family must not be empty")]
    EmptyFamily,
}

/// A parsed symbol over a chart of half-dimension `dim`.
///
/// Immutable once built; clones share the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolAst {
    root: Arc<Node>,
    dim: usize,
}

impl SymbolAst {
    pub fn from_node(root: Node, dim: usize) -> Result<Self, SymbolError> {
        if dim == 0 {
            return Err(SymbolError::DimensionMismatch { expected: 1, found: 0 });
        }
        if root.uses_params() {
            return Err(SymbolError::UnboundVariable("s".into()));
        }
        if let Some(i) = root.max_var_index() {
            if i >= dim {
                return Err(SymbolError::DimensionMismatch {
                    expected: 2 * dim,
                    found: 2 * (i + 1),
                });
            }
        }
        Ok(Self {
            root: Arc::new(root),
            dim,
        })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Half-dimension `n` of the ambient chart.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64, SymbolError> {
        if p.len() != 2 * self.dim {
            return Err(SymbolError::DimensionMismatch {
                expected: 2 * self.dim,
                found: p.len(),
            });
        }
        self.root.eval_with(&|v| v.coordinate().map(|k| p[k]))
    }

    pub fn differentiate(&self, var: Var) -> SymbolAst {
        SymbolAst {
            root: Arc::new(diff::derivative(&self.root, var)),
            dim: self.dim,
        }
    }

    /// Derivative with respect to chart coordinate `k` of an interleaved point.
    pub fn partial(&self, k: usize) -> SymbolAst {
        self.differentiate(Var::from_coordinate(k))
    }

    pub fn is_constant(&self) -> bool {
        matches!(*self.root, Node::Const(_))
    }
}

impl fmt::Display for SymbolAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// Parses `text` as a symbol over `x1..x_dim, y1..y_dim`.
pub fn parse_symbol(text: &str, dim: usize) -> Result<SymbolAst, SymbolError> {
    if dim == 0 {
        return Err(SymbolError::DimensionMismatch { expected: 1, found: 0 });
    }
    let root = parser::Parser::new(text, dim, 0)?.parse()?;
    SymbolAst::from_node(root, dim)
}

/// A function `u(s1, ..., sk)` meant to be composed with `k` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterFunction {
    root: Node,
    arity: usize,
}

impl OuterFunction {
    pub fn parse(text: &str, arity: usize) -> Result<Self, SymbolError> {
        let root = parser::Parser::new(text, 0, arity)?.parse()?;
        Ok(Self { root, arity })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Builds `u(F_1, ..., F_k)`.
    pub fn compose(&self, inner: &[SymbolAst]) -> Result<SymbolAst, SymbolError> {
        if inner.len() != self.arity {
            return Err(SymbolError::DimensionMismatch {
                expected: self.arity,
                found: inner.len(),
            });
        }
        let dim = inner.first().map(|s| s.dim).ok_or(SymbolError::EmptyFamily)?;
        let nodes: Vec<Node> = inner.iter().map(|s| (*s.root).clone()).collect();
        SymbolAst::from_node(self.root.substitute(&nodes), dim)
    }
}

impl fmt::Display for OuterFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// A symbol together with its exact first partials.
#[derive(Debug, Clone)]
pub struct Symbol {
    ast: SymbolAst,
    partials: Vec<SymbolAst>,
}

impl Symbol {
    pub fn new(ast: SymbolAst) -> Self {
        let partials = (0..2 * ast.dim).map(|k| ast.partial(k)).collect();
        Self { ast, partials }
    }

    pub fn parse(text: &str, dim: usize) -> Result<Self, SymbolError> {
        parse_symbol(text, dim).map(Self::new)
    }

    pub fn ast(&self) -> &SymbolAst {
        &self.ast
    }

    pub fn dim(&self) -> usize {
        self.ast.dim
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64, SymbolError> {
        self.ast.eval(p)
    }

    /// Analytic gradient in interleaved coordinate order.
    pub fn gradient(&self, p: &[f64]) -> Result<Vec<f64>, SymbolError> {
        self.partials.iter().map(|d| d.eval(p)).collect()
    }
}

impl From<SymbolAst> for Symbol {
    fn from(ast: SymbolAst) -> Self {
        Symbol::new(ast)
    }
}

/// An ordered, nonempty list of symbols sharing one chart dimension.
#[derive(Debug, Clone)]
pub struct SymbolFamily {
    members: Vec<Symbol>,
    names: Vec<String>,
}

impl SymbolFamily {
    pub fn new(members: Vec<Symbol>, names: Vec<String>) -> Result<Self, SymbolError> {
        let first = members.first().ok_or(SymbolError::EmptyFamily)?;
        let dim = first.dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
            return Err(SymbolError::DimensionMismatch {
                expected: 2 * dim,
                found: 2 * bad.dim(),
            });
        }
        let mut names = names;
        names.resize_with(members.len(), String::new);
        for (i, name) in names.iter_mut().enumerate() {
            if name.is_empty() {
                *name = format!("a{}", i + 1);
            }
        }
        Ok(Self { members, names })
    }

    /// Parses each expression against half-dimension `dim`, naming them `a1, a2, ...`.
    pub fn parse<S: AsRef<str>>(exprs: &[S], dim: usize) -> Result<Self, SymbolError> {
        let members = exprs
            .iter()
            .map(|e| Symbol::parse(e.as_ref(), dim))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(members, Vec::new())
    }

    pub fn members(&self) -> &[Symbol] {
        &self.members
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn get(&self, i: usize) -> &Symbol {
        &self.members[i]
    }

    pub fn subfamily(&self, indices: &[usize]) -> SymbolFamily {
        SymbolFamily {
            members: indices.iter().map(|&i| self.members[i].clone()).collect(),
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
        }
    }
}
