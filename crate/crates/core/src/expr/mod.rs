//! Expression trees, operators, canonical forms and equivalence testing.

mod canon;
mod equiv;
mod op;
mod parse;
mod tree;

pub use canon::{canonical_key, canonicalize, round_constants};
pub use equiv::{equivalent, halton_points, numerically_equal, radical_inverse, Domain, EQUIV_POINTS, EQUIV_TOL};
pub use op::{Op, OperatorClass, OperatorSet, ALL_OPS};
pub use parse::parse;
pub use tree::{Bindings, Columns, Expr, Node};

#[cfg(test)]
pub(crate) mod strategy {
    use super::*;
    use proptest::prelude::*;

    const UNARY: [Op; 8] = [Op::Identity, Op::Neg, Op::Inv, Op::Sin, Op::Cos, Op::Exp, Op::Log, Op::Tanh];
    const BINARY: [Op; 4] = [Op::Add, Op::Mul, Op::Sub, Op::Div];

    pub fn leaf() -> impl Strategy<Value = Expr> {
        prop_oneof![
            3 => prop_oneof![Just("x"), Just("y")].prop_map(Expr::var),
            1 => (-3i32..=3).prop_map(|c| Expr::constant(c as f64 * 0.5)),
        ]
    }

    /// Random trees of height at most `depth`.
    pub fn tree(depth: u32) -> impl Strategy<Value = Expr> {
        leaf().prop_recursive(depth, 64, 2, |inner| {
            prop_oneof![
                (0..UNARY.len(), inner.clone()).prop_map(|(i, a)| Expr::unary(UNARY[i], a)),
                (0..BINARY.len(), inner.clone(), inner).prop_map(|(i, a, b)| Expr::binary(BINARY[i], a, b)),
            ]
        })
    }
}

#[cfg(test)]
mod properties {
    use super::strategy::tree;
    use super::*;
    use proptest::prelude::*;

    /// Value plus the largest magnitude seen at any node, a bound on the
    /// rounding error that reassociation can introduce.
    fn eval_scaled(e: &Expr, x: f64, y: f64) -> (f64, f64) {
        match e.node() {
            Node::Var(n) => {
                let v = if &**n == "x" { x } else { y };
                (v, v.abs())
            }
            Node::Const(c) => (*c, c.abs()),
            Node::Unary(op, a) => {
                let (va, sa) = eval_scaled(a, x, y);
                let v = op.eval1(va);
                (v, sa.max(v.abs()))
            }
            Node::Binary(op, a, b) => {
                let (va, sa) = eval_scaled(a, x, y);
                let (vb, sb) = eval_scaled(b, x, y);
                let v = op.eval2(va, vb);
                (v, sa.max(sb).max(v.abs()))
            }
        }
    }

    const POINTS: [(f64, f64); 5] = [(0.3, -0.7), (1.1, 0.4), (-1.3, 2.0), (0.05, -0.2), (1.9, 1.7)];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn canonicalize_is_idempotent(e in tree(6)) {
            let once = canonicalize(&e);
            prop_assert_eq!(canonicalize(&once).to_string(), once.to_string());
        }

        #[test]
        fn canonicalize_preserves_values(e in tree(6)) {
            let c = canonicalize(&e);
            for (x, y) in POINTS {
                let (v, scale) = eval_scaled(&e, x, y);
                if !v.is_finite() || !scale.is_finite() {
                    continue;
                }
                let (w, _) = eval_scaled(&c, x, y);
                prop_assert!((v - w).abs() <= 1e-12 * (1.0 + scale), "{} vs {}: {} != {}", e, c, v, w);
            }
        }

        #[test]
        fn equivalence_is_reflexive_and_symmetric(a in tree(4), b in tree(4)) {
            let d = Domain::default();
            prop_assert!(equivalent(&a, &a, &d, EQUIV_TOL));
            prop_assert_eq!(equivalent(&a, &b, &d, EQUIV_TOL), equivalent(&b, &a, &d, EQUIV_TOL));
        }

        #[test]
        fn complexity_ignores_commutative_order(a in tree(4), b in tree(4)) {
            for op in [Op::Add, Op::Mul] {
                let ab = Expr::binary(op, a.clone(), b.clone());
                let ba = Expr::binary(op, b.clone(), a.clone());
                prop_assert_eq!(ab.complexity(), ba.complexity());
                prop_assert_eq!(canonical_key(&ab), canonical_key(&ba));
            }
        }

        #[test]
        fn format_parse_roundtrip(e in tree(5)) {
            let back = parse(&e.to_string()).unwrap();
            prop_assert_eq!(canonical_key(&back), canonical_key(&e));
        }
    }
}
