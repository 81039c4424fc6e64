use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use super::op::Op;
use crate::error::{Error, Result};

/// Immutable expression parse tree. Cloning is cheap: subtrees are shared.
#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

#[derive(Debug, PartialEq)]
pub enum Node {
    Var(Arc<str>),
    Const(f64),
    Unary(Op, Expr),
    Binary(Op, Expr, Expr),
}

/// Source of named data columns for vectorised evaluation.
pub trait Bindings {
    fn column(&self, name: &str) -> Option<&[f64]>;
    fn rows(&self) -> usize;
}

/// Borrowed named columns.
#[derive(Clone, Debug, Default)]
pub struct Columns<'a> {
    names: Vec<&'a str>,
    cols: Vec<&'a [f64]>,
    rows: usize,
}

impl<'a> Columns<'a> {
    pub fn new(rows: usize) -> Self {
        Self { names: Vec::new(), cols: Vec::new(), rows }
    }

    pub fn with(mut self, name: &'a str, col: &'a [f64]) -> Self {
        self.push(name, col);
        self
    }

    pub fn push(&mut self, name: &'a str, col: &'a [f64]) {
        self.names.push(name);
        self.cols.push(col);
    }
}

impl Bindings for Columns<'_> {
    fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| *n == name).map(|i| self.cols[i])
    }

    fn rows(&self) -> usize {
        self.rows
    }
}

impl Bindings for HashMap<String, Vec<f64>> {
    fn column(&self, name: &str) -> Option<&[f64]> {
        self.get(name).map(Vec::as_slice)
    }

    fn rows(&self) -> usize {
        self.values().next().map_or(0, Vec::len)
    }
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr(Arc::new(Node::Var(Arc::from(name))))
    }

    pub fn constant(value: f64) -> Self {
        Expr(Arc::new(Node::Const(value)))
    }

    pub fn unary(op: Op, arg: Expr) -> Self {
        debug_assert!(op.is_unary(), "{op} is not unary");
        Expr(Arc::new(Node::Unary(op, arg)))
    }

    pub fn binary(op: Op, lhs: Expr, rhs: Expr) -> Self {
        debug_assert!(!op.is_unary(), "{op} is not binary");
        Expr(Arc::new(Node::Binary(op.expr_op(), lhs, rhs)))
    }

    /// Builds a node from an operator and its children; panics on arity mismatch.
    pub fn apply(op: Op, mut children: Vec<Expr>) -> Self {
        assert_eq!(children.len(), op.arity(), "arity mismatch for {op}");
        if op.is_unary() {
            Expr::unary(op, children.pop().unwrap())
        } else {
            let rhs = children.pop().unwrap();
            let lhs = children.pop().unwrap();
            Expr::binary(op, lhs, rhs)
        }
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::binary(Op::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::binary(Op::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        Expr::binary(Op::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Self {
        Expr::binary(Op::Div, a, b)
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match &*self.0 {
            Node::Var(name) => Some(name),
            _ => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(*self.0, Node::Var(_) | Node::Const(_))
    }

    pub fn op(&self) -> Option<Op> {
        match *self.0 {
            Node::Unary(op, _) | Node::Binary(op, _, _) => Some(op),
            _ => None,
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match &*self.0 {
            Node::Unary(_, a) => vec![a],
            Node::Binary(_, a, b) => vec![a, b],
            _ => Vec::new(),
        }
    }

    /// Number of operator nodes; identity nodes and leaves count zero.
    pub fn complexity(&self) -> usize {
        match &*self.0 {
            Node::Var(_) | Node::Const(_) => 0,
            Node::Unary(op, a) => op.complexity() + a.complexity(),
            Node::Binary(op, a, b) => op.complexity() + a.complexity() + b.complexity(),
        }
    }

    /// Height of the tree; a leaf has height 0.
    pub fn height(&self) -> usize {
        match &*self.0 {
            Node::Var(_) | Node::Const(_) => 0,
            Node::Unary(_, a) => 1 + a.height(),
            Node::Binary(_, a, b) => 1 + a.height().max(b.height()),
        }
    }

    pub fn size(&self) -> usize {
        match &*self.0 {
            Node::Var(_) | Node::Const(_) => 1,
            Node::Unary(_, a) => 1 + a.size(),
            Node::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Var(name) = e.node() {
                out.insert(name.to_string());
            }
        });
        out
    }

    /// Constants in pre-order.
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Node::Const(c) = e.node() {
                out.push(*c);
            }
        });
        out
    }

    pub fn has_constants(&self) -> bool {
        match &*self.0 {
            Node::Const(_) => true,
            Node::Var(_) => false,
            Node::Unary(_, a) => a.has_constants(),
            Node::Binary(_, a, b) => a.has_constants() || b.has_constants(),
        }
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match &*self.0 {
            Node::Unary(_, a) => a.visit(f),
            Node::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// All subtrees in pre-order, including `self`.
    pub fn subtrees(&self) -> Vec<Expr> {
        let mut out = Vec::new();
        self.visit(&mut |e| out.push(e.clone()));
        out
    }

    /// Replaces constants in pre-order with `values`; extra values are ignored.
    pub fn with_constants(&self, values: &[f64]) -> Expr {
        let mut it = values.iter().copied();
        self.map_constants(&mut |c| it.next().unwrap_or(c))
    }

    pub fn map_constants(&self, f: &mut impl FnMut(f64) -> f64) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(f(*c)),
            Node::Var(_) => self.clone(),
            Node::Unary(op, a) => Expr::unary(*op, a.map_constants(f)),
            Node::Binary(op, a, b) => {
                let a = a.map_constants(f);
                let b = b.map_constants(f);
                Expr::binary(*op, a, b)
            }
        }
    }

    /// Replaces every variable `name` for which `f` returns a tree.
    pub fn substitute(&self, f: &impl Fn(&str) -> Option<Expr>) -> Expr {
        match &*self.0 {
            Node::Var(name) => f(name).unwrap_or_else(|| self.clone()),
            Node::Const(_) => self.clone(),
            Node::Unary(op, a) => Expr::unary(*op, a.substitute(f)),
            Node::Binary(op, a, b) => Expr::binary(*op, a.substitute(f), b.substitute(f)),
        }
    }

    /// Returns a copy with the pre-order subtree at `index` replaced.
    pub fn replace_at(&self, index: usize, replacement: &Expr) -> Expr {
        let mut counter = 0;
        self.replace_rec(index, replacement, &mut counter)
    }

    fn replace_rec(&self, index: usize, replacement: &Expr, counter: &mut usize) -> Expr {
        if *counter == index {
            *counter += self.size();
            return replacement.clone();
        }
        *counter += 1;
        match &*self.0 {
            Node::Var(_) | Node::Const(_) => self.clone(),
            Node::Unary(op, a) => {
                let end = *counter + a.size();
                if index >= end {
                    *counter = end;
                    return self.clone();
                }
                Expr::unary(*op, a.replace_rec(index, replacement, counter))
            }
            Node::Binary(op, a, b) => {
                let a2 = if index < *counter + a.size() {
                    a.replace_rec(index, replacement, counter)
                } else {
                    *counter += a.size();
                    a.clone()
                };
                let b2 = if index >= *counter && index < *counter + b.size() {
                    b.replace_rec(index, replacement, counter)
                } else {
                    *counter += b.size();
                    b.clone()
                };
                Expr::binary(*op, a2, b2)
            }
        }
    }

    /// Element-wise IEEE evaluation over the rows of `data`.
    pub fn evaluate(&self, data: &impl Bindings) -> Result<Vec<f64>> {
        let n = data.rows();
        self.eval_rec(data, n)
    }

    fn eval_rec(&self, data: &impl Bindings, n: usize) -> Result<Vec<f64>> {
        match &*self.0 {
            Node::Var(name) => {
                let col = data
                    .column(name)
                    .ok_or_else(|| Error::UnboundVariable(name.to_string()))?;
                if col.len() != n {
                    return Err(Error::ColumnLength {
                        name: name.to_string(),
                        got: col.len(),
                        expected: n,
                    });
                }
                Ok(col.to_vec())
            }
            Node::Const(c) => Ok(vec![*c; n]),
            Node::Unary(op, a) => {
                let mut v = a.eval_rec(data, n)?;
                for x in &mut v {
                    *x = op.eval1(*x);
                }
                Ok(v)
            }
            Node::Binary(op, a, b) => {
                let mut va = a.eval_rec(data, n)?;
                let vb = b.eval_rec(data, n)?;
                for (x, y) in va.iter_mut().zip(&vb) {
                    *x = op.eval2(*x, *y);
                }
                Ok(va)
            }
        }
    }

    /// Scalar evaluation with a variable lookup.
    pub fn eval_scalar(&self, lookup: &impl Fn(&str) -> Option<f64>) -> Result<f64> {
        Ok(match &*self.0 {
            Node::Var(name) => lookup(name).ok_or_else(|| Error::UnboundVariable(name.to_string()))?,
            Node::Const(c) => *c,
            Node::Unary(op, a) => op.eval1(a.eval_scalar(lookup)?),
            Node::Binary(op, a, b) => op.eval2(a.eval_scalar(lookup)?, b.eval_scalar(lookup)?),
        })
    }
}

pub(crate) fn format_constant(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.is_nan() {
        f.write_str("nan")
    } else if c == f64::INFINITY {
        f.write_str("inf")
    } else if c == f64::NEG_INFINITY {
        f.write_str("(-inf)")
    } else if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
        write!(f, "({c})")
    } else {
        write!(f, "{c}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Var(name) => f.write_str(name),
            Node::Const(c) => format_constant(*c, f),
            Node::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Node::Binary(op, a, b) => {
                let sym = op.symbol().unwrap_or("?");
                let wrap = |e: &Expr| matches!(e.node(), Node::Binary(..));
                if wrap(a) {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {sym} ")?;
                if wrap(b) {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var("x1")
    }

    #[test]
    fn identity_evaluates_to_input() {
        let e = Expr::unary(Op::Identity, Expr::var("x"));
        let data = Columns::new(3).with("x", &[1.0, 2.0, 3.0]);
        assert_eq!(e.evaluate(&data).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn nguyen1_at_one() {
        let x3 = Expr::mul(Expr::mul(x(), x()), x());
        let e = Expr::add(Expr::add(x3, Expr::mul(x(), x())), x());
        let data = Columns::new(1).with("x1", &[1.0]);
        assert_eq!(e.evaluate(&data).unwrap(), vec![3.0]);
    }

    #[test]
    fn log_of_negative_is_nan() {
        let e = Expr::unary(Op::Log, x());
        let data = Columns::new(1).with("x1", &[-1.0]);
        assert!(e.evaluate(&data).unwrap()[0].is_nan());
    }

    #[test]
    fn unbound_variable() {
        let e = Expr::add(x(), Expr::var("q"));
        let data = Columns::new(1).with("x1", &[1.0]);
        let err = e.evaluate(&data).unwrap_err();
        assert!(err.to_string().contains("unbound variable"));
    }

    #[test]
    fn complexity_counts_operators() {
        assert_eq!(x().complexity(), 0);
        assert_eq!(Expr::unary(Op::Sin, x()).complexity(), 1);
        // sin(x1*x1)*cos(x1) - 1
        let n5 = Expr::sub(
            Expr::mul(
                Expr::unary(Op::Sin, Expr::mul(x(), x())),
                Expr::unary(Op::Cos, x()),
            ),
            Expr::constant(1.0),
        );
        assert_eq!(n5.complexity(), 5);
        assert_eq!(Expr::unary(Op::Identity, x()).complexity(), 0);
    }

    #[test]
    fn format_infix() {
        let e = Expr::add(x(), Expr::var("x2"));
        assert_eq!(e.to_string(), "x1 + x2");
        let e = Expr::mul(Expr::add(x(), Expr::constant(-2.5)), Expr::unary(Op::Sin, x()));
        assert_eq!(e.to_string(), "(x1 + (-2.5)) * sin(x1)");
    }

    #[test]
    fn replace_at_walks_preorder() {
        // (x1 + 2) * sin(x1): pre-order [*, +, x1, 2, sin, x1]
        let e = Expr::mul(Expr::add(x(), Expr::constant(2.0)), Expr::unary(Op::Sin, x()));
        let y = Expr::var("y");
        assert_eq!(e.replace_at(0, &y).to_string(), "y");
        assert_eq!(e.replace_at(3, &y).to_string(), "(x1 + y) * sin(x1)");
        assert_eq!(e.replace_at(5, &y).to_string(), "(x1 + 2) * sin(y)");
        assert_eq!(e.replace_at(4, &y).to_string(), "(x1 + 2) * y");
        for (i, sub) in e.subtrees().iter().enumerate() {
            assert_eq!(e.replace_at(i, sub), e);
        }
    }

    #[test]
    fn constants_roundtrip() {
        let e = Expr::mul(Expr::constant(1.5), Expr::add(x(), Expr::constant(2.0)));
        assert_eq!(e.constants(), vec![1.5, 2.0]);
        assert_eq!(e.with_constants(&[3.0, 4.0]).constants(), vec![3.0, 4.0]);
    }
}
