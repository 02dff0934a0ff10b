use std::fmt;

use super::SymbolError;

/// A coordinate or composition parameter referenced by an expression.
///
/// Indices are zero-based; `X(0)` prints as `x1`. Chart points are stored
/// interleaved as `(x1, y1, x2, y2, ...)`, so `X(i)` reads coordinate `2i`
/// and `Y(i)` reads coordinate `2i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    Y(usize),
    /// Placeholder `s<k>` used by outer functions in a composition `u(F)`.
    S(usize),
}

impl Var {
    /// Position of this variable inside an interleaved chart point.
    pub fn coordinate(self) -> Option<usize> {
        match self {
            Var::X(i) => Some(2 * i),
            Var::Y(i) => Some(2 * i + 1),
            Var::S(_) => None,
        }
    }

    /// Inverse of [`Var::coordinate`].
    pub fn from_coordinate(k: usize) -> Var {
        if k.is_multiple_of(2) {
            Var::X(k / 2)
        } else {
            Var::Y(k / 2)
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::S(i) => write!(f, "s{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Option<f64> {
        match self {
            Func::Sin => Some(x.sin()),
            Func::Cos => Some(x.cos()),
            Func::Exp => Some(x.exp()),
            Func::Log if x > 0.0 => Some(x.ln()),
            Func::Sqrt if x > 0.0 => Some(x.sqrt()),
            // sqrt(0) is finite but its derivative is not; keep the domain open
            Func::Log | Func::Sqrt => None,
        }
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
    /// `atan2(y, x)`
    Atan2(Box<Node>, Box<Node>),
}

impl Node {
    pub(crate) fn eval_with(&self, lookup: &dyn Fn(Var) -> Option<f64>) -> Result<f64, SymbolError> {
        Ok(match self {
            Node::Const(c) => *c,
            Node::Var(v) => lookup(*v).ok_or(SymbolError::UnboundVariable(v.to_string()))?,
            Node::Neg(a) => -a.eval_with(lookup)?,
            Node::Add(a, b) => a.eval_with(lookup)? + b.eval_with(lookup)?,
            Node::Sub(a, b) => a.eval_with(lookup)? - b.eval_with(lookup)?,
            Node::Mul(a, b) => a.eval_with(lookup)? * b.eval_with(lookup)?,
            Node::Div(a, b) => {
                let num = a.eval_with(lookup)?;
                let den = b.eval_with(lookup)?;
                if den == 0.0 {
                    return Err(self.domain_error(den));
                }
                num / den
            }
            Node::Pow(a, k) => {
                let base = a.eval_with(lookup)?;
                if base == 0.0 && *k < 0 {
                    return Err(self.domain_error(base));
                }
                base.powi(*k)
            }
            Node::Call(func, a) => {
                let x = a.eval_with(lookup)?;
                func.apply(x).ok_or_else(|| self.domain_error(x))?
            }
            Node::Atan2(y, x) => {
                let yv = y.eval_with(lookup)?;
                let xv = x.eval_with(lookup)?;
                yv.atan2(xv)
            }
        })
    }

    fn domain_error(&self, argument: f64) -> SymbolError {
        SymbolError::Domain {
            node: self.to_string(),
            argument,
        }
    }

    pub(crate) fn max_var_index(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Var(Var::X(i) | Var::Y(i) | Var::S(i)) => Some(*i),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.max_var_index(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Atan2(a, b) => {
                match (a.max_var_index(), b.max_var_index()) {
                    (Some(i), Some(j)) => Some(i.max(j)),
                    (i, j) => i.or(j),
                }
            }
        }
    }

    pub(crate) fn uses_params(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(v) => matches!(v, Var::S(_)),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.uses_params(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Atan2(a, b) => {
                a.uses_params() || b.uses_params()
            }
        }
    }

    /// Replaces every `s<k>` with `inner[k]`.
    pub(crate) fn substitute(&self, inner: &[Node]) -> Node {
        match self {
            Node::Var(Var::S(k)) => inner[*k].clone(),
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Neg(a) => Node::Neg(Box::new(a.substitute(inner))),
            Node::Add(a, b) => Node::Add(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
            Node::Sub(a, b) => Node::Sub(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
            Node::Mul(a, b) => Node::Mul(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
            Node::Div(a, b) => Node::Div(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
            Node::Pow(a, k) => Node::Pow(Box::new(a.substitute(inner)), *k),
            Node::Call(f, a) => Node::Call(*f, Box::new(a.substitute(inner))),
            Node::Atan2(a, b) => Node::Atan2(Box::new(a.substitute(inner)), Box::new(b.substitute(inner))),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Pow(..) => 4,
            Node::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, child: &Node, min_prec: u8) -> fmt::Result {
        if child.precedence() < min_prec {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Var(v) => write!(f, "{v}"),
            Node::Neg(a) => {
                f.write_str("-")?;
                self.fmt_child(f, a, 4)
            }
            Node::Add(a, b) => {
                self.fmt_child(f, a, 1)?;
                f.write_str(" + ")?;
                self.fmt_child(f, b, 2)
            }
            Node::Sub(a, b) => {
                self.fmt_child(f, a, 1)?;
                f.write_str(" - ")?;
                self.fmt_child(f, b, 2)
            }
            Node::Mul(a, b) => {
                self.fmt_child(f, a, 2)?;
                f.write_str("*")?;
                self.fmt_child(f, b, 3)
            }
            Node::Div(a, b) => {
                self.fmt_child(f, a, 2)?;
                f.write_str("/")?;
                self.fmt_child(f, b, 3)
            }
            Node::Pow(a, k) => {
                self.fmt_child(f, a, 5)?;
                if *k < 0 {
                    write!(f, "^({k})")
                } else {
                    write!(f, "^{k}")
                }
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
            Node::Atan2(y, x) => write!(f, "atan2({y}, {x})"),
        }
    }
}

// Constant-folding constructors used by the differentiator.

pub(crate) fn constant(node: &Node) -> Option<f64> {
    match node {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

fn folded(value: f64, fallback: impl FnOnce() -> Node) -> Node {
    if value.is_finite() {
        Node::Const(value)
    } else {
        fallback()
    }
}

pub(crate) fn neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

pub(crate) fn add(a: Node, b: Node) -> Node {
    match (constant(&a), constant(&b)) {
        (Some(x), Some(y)) => Node::Const(x + y),
        (Some(0.0), None) => b,
        (None, Some(0.0)) => a,
        _ => Node::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Node, b: Node) -> Node {
    match (constant(&a), constant(&b)) {
        (Some(x), Some(y)) => Node::Const(x - y),
        (Some(0.0), None) => neg(b),
        (None, Some(0.0)) => a,
        _ => Node::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Node, b: Node) -> Node {
    match (constant(&a), constant(&b)) {
        (Some(x), Some(y)) => Node::Const(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => Node::Const(0.0),
        (Some(1.0), None) => b,
        (None, Some(1.0)) => a,
        (Some(-1.0), None) => neg(b),
        (None, Some(-1.0)) => neg(a),
        _ => Node::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Node, b: Node) -> Node {
    match (constant(&a), constant(&b)) {
        (Some(x), Some(y)) if y != 0.0 => folded(x / y, || Node::Div(Box::new(a.clone()), Box::new(b.clone()))),
        (Some(0.0), _) => Node::Const(0.0),
        (None, Some(1.0)) => a,
        _ => Node::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn pow(a: Node, k: i32) -> Node {
    match (constant(&a), k) {
        (_, 0) => Node::Const(1.0),
        (_, 1) => a,
        (Some(x), _) if x != 0.0 || k > 0 => folded(x.powi(k), || Node::Pow(Box::new(a.clone()), k)),
        _ => Node::Pow(Box::new(a), k),
    }
}

pub(crate) fn call(func: Func, a: Node) -> Node {
    match constant(&a).and_then(|x| func.apply(x)) {
        Some(v) if v.is_finite() => Node::Const(v),
        _ => Node::Call(func, Box::new(a)),
    }
}
