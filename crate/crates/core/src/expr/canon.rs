//! Canonical form: light, value-preserving normalisation used for dedup keys.
//!
//! Rules, applied bottom-up:
//! - `identity(a) -> a`, `neg(neg(a)) -> a`, `inv(inv(a)) -> a`
//! - all-constant subtrees fold to a constant when the result is finite
//! - `+` and `*` chains are flattened, their constants merged into one leading
//!   constant, neutral elements dropped and the remaining operands sorted by key
//! - `a - a -> 0`, `a / a -> 1`, `a - 0 -> a`, `a / 1 -> a`

use std::cmp::Ordering;

use super::op::Op;
use super::tree::{Expr, Node};

pub fn canonicalize(e: &Expr) -> Expr {
    match e.node() {
        Node::Var(_) => e.clone(),
        Node::Const(c) => {
            if *c == 0.0 {
                Expr::constant(0.0)
            } else {
                e.clone()
            }
        }
        Node::Unary(op, a) => canon_unary(*op, canonicalize(a)),
        Node::Binary(op, a, b) => {
            let a = canonicalize(a);
            let b = canonicalize(b);
            match op {
                Op::Add | Op::Mul => canon_chain(*op, a, b),
                _ => canon_noncommutative(*op, a, b),
            }
        }
    }
}

/// Stable string key: the formatted canonical form.
pub fn canonical_key(e: &Expr) -> String {
    canonicalize(e).to_string()
}

/// Rounds every constant to `decimals` decimal places.
pub fn round_constants(e: &Expr, decimals: i32) -> Expr {
    let scale = 10f64.powi(decimals);
    e.map_constants(&mut |c| {
        let r = (c * scale).round() / scale;
        if r.is_finite() {
            r + 0.0
        } else {
            c
        }
    })
}

fn fold(c: f64) -> Option<Expr> {
    c.is_finite().then(|| Expr::constant(c + 0.0))
}

fn canon_unary(op: Op, a: Expr) -> Expr {
    match (op, a.node()) {
        (Op::Identity, _) => return a,
        (Op::Neg, Node::Unary(Op::Neg, inner)) | (Op::Inv, Node::Unary(Op::Inv, inner)) => {
            return inner.clone()
        }
        (_, Node::Const(c)) => {
            if let Some(folded) = fold(op.eval1(*c)) {
                return folded;
            }
        }
        _ => {}
    }
    Expr::unary(op, a)
}

fn canon_noncommutative(op: Op, a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(folded) = fold(op.eval2(x, y)) {
            return folded;
        }
    }
    match op {
        Op::Sub => {
            if b.as_const() == Some(0.0) {
                return a;
            }
            if a == b {
                return Expr::constant(0.0);
            }
        }
        Op::Div => {
            if b.as_const() == Some(1.0) {
                return a;
            }
            if a == b {
                return Expr::constant(1.0);
            }
        }
        _ => {}
    }
    Expr::binary(op, a, b)
}

fn flatten_into(op: Op, e: Expr, out: &mut Vec<Expr>) {
    match e.node() {
        Node::Binary(inner, a, b) if *inner == op => {
            flatten_into(op, a.clone(), out);
            flatten_into(op, b.clone(), out);
        }
        _ => out.push(e),
    }
}

fn canon_chain(op: Op, a: Expr, b: Expr) -> Expr {
    let mut operands = Vec::new();
    flatten_into(op, a, &mut operands);
    flatten_into(op, b, &mut operands);

    let neutral = if op == Op::Add { 0.0 } else { 1.0 };
    let mut constant: Option<f64> = None;
    let mut stuck_constants = Vec::new();
    let mut terms = Vec::new();
    for e in operands {
        match e.as_const() {
            Some(c) => {
                let merged = constant.map_or(c, |acc| op.eval2(acc, c));
                if merged.is_finite() {
                    constant = Some(merged);
                } else {
                    stuck_constants.push(e);
                }
            }
            None => terms.push(e),
        }
    }
    let mut keyed: Vec<(String, Expr)> = terms.into_iter().map(|t| (t.to_string(), t)).collect();
    keyed.sort_by(|x, y| cmp_terms(&x.0, &y.0));

    let mut parts: Vec<Expr> = Vec::with_capacity(keyed.len() + 2);
    match constant {
        Some(c) if c == neutral && !keyed.is_empty() => {}
        Some(c) => parts.push(Expr::constant(c + 0.0)),
        None => {}
    }
    parts.extend(stuck_constants);
    parts.extend(keyed.into_iter().map(|(_, t)| t));

    let mut it = parts.into_iter();
    let first = it.next().unwrap_or_else(|| Expr::constant(neutral));
    it.fold(first, |acc, t| Expr::binary(op, acc, t))
}

fn cmp_terms(a: &str, b: &str) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::parse;

    fn canon(s: &str) -> String {
        canonical_key(&parse(s).unwrap())
    }

    #[test]
    fn commutative_sort() {
        assert_eq!(canon("x2 + x1"), "x1 + x2");
        assert_eq!(canon("x2 + x1"), canon("x1 + x2"));
        assert_eq!(canon("(x3 * x1) * x2"), canon("x2 * (x1 * x3)"));
    }

    #[test]
    fn identity_collapse() {
        assert_eq!(canon("identity(identity(x1))"), "x1");
        assert_eq!(canon("neg(neg(x1))"), "x1");
        assert_eq!(canon("inv(inv(x1))"), "x1");
    }

    #[test]
    fn constant_fold() {
        assert_eq!(canon("(1+2)*x1"), "3 * x1");
        assert_eq!(canon("2 * (x1 * 3)"), "6 * x1");
        assert_eq!(canon("x + 0"), "x");
        assert_eq!(canon("1 * x"), "x");
        assert_eq!(canon("sin(0)"), "0");
        // non-finite results are kept symbolic
        assert_eq!(canon("log(0 - 1)"), "log(-1)".replace("-1", "(-1)"));
    }

    #[test]
    fn self_cancellation() {
        assert_eq!(canon("sin(x) - sin(x)"), "0");
        assert_eq!(canon("(x + y) / (y + x)"), "1");
        assert_eq!(canon("x*x + (x - x)"), "x * x");
    }

    #[test]
    fn idempotent_on_examples() {
        for s in ["x2 + x1", "(1+2)*x1", "sin(x*x)*cos(x) - 1", "x/(x*0)", "((a+1)+(b+2))*3"] {
            let once = canonicalize(&parse(s).unwrap());
            assert_eq!(canonicalize(&once), once, "{s}");
        }
    }

    #[test]
    fn rounding() {
        let e = parse("3.390001*x + 2.119998").unwrap();
        assert_eq!(round_constants(&e, 2).to_string(), "(3.39 * x) + 2.12");
    }
}
