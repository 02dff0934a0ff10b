//! Recursive-descent parser for the symbol grammar.
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = ("-" | "+") unary | power ;
//! power    = atom [ "^" exponent ] ;
//! exponent = [ "-" ] integer | "(" [ "-" ] integer ")" ;
//! atom     = number | variable | "pi" | func "(" expr ")"
//!          | "atan2" "(" expr "," expr ")" | "(" expr ")" ;
//! func     = "sin" | "cos" | "exp" | "log" | "sqrt" ;
//! variable = ("x" | "y") index | "s" index ;   (* s only inside outer functions *)
//! ```

use super::ast::{Func, Node, Var};
use super::SymbolError;

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, SymbolError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                let mut integral = true;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    integral = false;
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        integral = false;
                        j = k;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let lit = &text[i..j];
                i = j;
                let value: f64 = lit.parse().map_err(|_| SymbolError::Syntax {
                    offset: start,
                    expected: "a number".into(),
                    found: format!("'{lit}'"),
                })?;
                match lit.parse::<i64>() {
                    Ok(v) if integral => out.push((Tok::Int(v), start)),
                    _ => out.push((Tok::Num(value), start)),
                }
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(text[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(SymbolError::Syntax {
                    offset: start,
                    expected: "an operator, number, or identifier".into(),
                    found: format!("'{ch}'"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

pub(crate) struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
    params: usize,
    depth: usize,
}

impl Parser {
    pub(crate) fn new(text: &str, dim: usize, params: usize) -> Result<Self, SymbolError> {
        Ok(Self {
            toks: lex(text)?,
            pos: 0,
            dim,
            params,
            depth: 0,
        })
    }

    pub(crate) fn parse(mut self) -> Result<Node, SymbolError> {
        if matches!(self.peek(), Tok::End) {
            return Err(self.expected("an expression"));
        }
        let node = self.expr()?;
        if !matches!(self.peek(), Tok::End) {
            return Err(self.expected("an operator or end of input"));
        }
        Ok(node)
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expected(&self, what: &str) -> SymbolError {
        SymbolError::Syntax {
            offset: self.offset(),
            expected: what.into(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SymbolError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.expected(what))
        }
    }

    fn enter(&mut self) -> Result<(), SymbolError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(SymbolError::Syntax {
                offset: self.offset(),
                expected: format!("nesting depth at most {MAX_DEPTH}"),
                found: self.peek().describe(),
            });
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Node, SymbolError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, SymbolError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, SymbolError> {
        match self.peek() {
            Tok::Minus => {
                self.enter()?;
                self.bump();
                let inner = self.unary()?;
                self.depth -= 1;
                Ok(Node::Neg(Box::new(inner)))
            }
            Tok::Plus => {
                self.enter()?;
                self.bump();
                let inner = self.unary()?;
                self.depth -= 1;
                Ok(inner)
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, SymbolError> {
        let base = self.atom()?;
        if !matches!(self.peek(), Tok::Caret) {
            return Ok(base);
        }
        self.bump();
        let k = self.exponent()?;
        if matches!(self.peek(), Tok::Caret) {
            return Err(self.expected("parentheses around a chained power"));
        }
        Ok(Node::Pow(Box::new(base), k))
    }

    fn exponent(&mut self) -> Result<i32, SymbolError> {
        let parens = matches!(self.peek(), Tok::LParen);
        if parens {
            self.bump();
        }
        let negative = matches!(self.peek(), Tok::Minus);
        if negative {
            self.bump();
        }
        let k = match self.peek() {
            Tok::Int(v) if *v <= i32::MAX as i64 => *v as i32,
            _ => return Err(self.expected("an integer exponent")),
        };
        self.bump();
        if parens {
            self.expect(Tok::RParen, "')'")?;
        }
        Ok(if negative { -k } else { k })
    }

    fn atom(&mut self) -> Result<Node, SymbolError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::Int(v) => Ok(Node::Const(v as f64)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => self.identifier(name, offset),
            other => {
                Err(SymbolError::Syntax {
                    offset,
                    expected: "a number, variable, function call, or '('".into(),
                    found: other.describe(),
                })
            }
        }
    }

    fn identifier(&mut self, name: String, offset: usize) -> Result<Node, SymbolError> {
        if name == "pi" {
            return Ok(Node::Const(std::f64::consts::PI));
        }
        if name == "atan2" || Func::from_name(&name).is_some() {
            self.enter()?;
            self.expect(Tok::LParen, "'(' after function name")?;
            let first = self.expr()?;
            let node = if name == "atan2" {
                self.expect(Tok::Comma, "',' between atan2 arguments")?;
                let second = self.expr()?;
                Node::Atan2(Box::new(first), Box::new(second))
            } else {
                Node::Call(Func::from_name(&name).expect("checked above"), Box::new(first))
            };
            self.expect(Tok::RParen, "')'")?;
            self.depth -= 1;
            return Ok(node);
        }
        match variable(&name) {
            Some(var @ (Var::X(i) | Var::Y(i))) if i < self.dim => Ok(Node::Var(var)),
            Some(Var::S(i)) if i < self.params => Ok(Node::Var(Var::S(i))),
            Some(_) => Err(SymbolError::UnknownVariable { name, offset }),
            None => Err(SymbolError::UnknownIdentifier { name, offset }),
        }
    }
}

fn variable(name: &str) -> Option<Var> {
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let index = digits.parse::<usize>().ok()?.checked_sub(1)?;
    match head {
        "x" => Some(Var::X(index)),
        "y" => Some(Var::Y(index)),
        "s" => Some(Var::S(index)),
        _ => None,
    }
}
