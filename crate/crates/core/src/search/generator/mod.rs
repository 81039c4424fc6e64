//! Token generators: proposers of the base expressions placed in the network
//! input slots.

mod gp;
mod mcts;
mod random;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gp::{GpGenerator, GpParams};
pub use mcts::{MctsGenerator, MctsParams};
pub use random::RandomGenerator;

use super::pareto::ParetoFront;
use crate::data::Dataset;
use crate::expr::{canonical_key, Expr, Op, OperatorSet};

/// Base expressions for the network slots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TokenBatch {
    pub slot_exprs: Vec<Expr>,
    /// Values of the constant slots.
    pub constants: Vec<f64>,
}

/// What a generator may look at when proposing or learning.
pub struct GenContext<'a> {
    pub vars: &'a [String],
    pub ops: &'a OperatorSet,
    pub n_slots: usize,
    /// `Some(range)` when constant tokens are enabled.
    pub constants: Option<(f64, f64)>,
    pub eta: f64,
    /// The rows used in the current iteration.
    pub data: &'a Dataset,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Gp,
    Mcts,
    Random,
}

impl std::str::FromStr for GeneratorKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gp" => Ok(Self::Gp),
            "mcts" => Ok(Self::Mcts),
            "random" => Ok(Self::Random),
            _ => Err(crate::Error::InvalidArgument(format!("unknown generator `{s}`"))),
        }
    }
}

pub trait TokenGenerator: Send {
    fn next(&mut self, ctx: &GenContext) -> TokenBatch;
    /// `best_reward` is the highest reward among candidates the batch produced.
    fn feedback(&mut self, ctx: &GenContext, batch: &TokenBatch, best_reward: f64, front: &ParetoFront);
    /// The generator's own best expression over the variables, if it tracks one.
    fn best(&self) -> Option<Expr> {
        None
    }
}

pub fn make_generator(kind: GeneratorKind, seed: u64) -> Box<dyn TokenGenerator> {
    match kind {
        GeneratorKind::Gp => Box::new(GpGenerator::new(GpParams::default(), seed)),
        GeneratorKind::Mcts => Box::new(MctsGenerator::new(MctsParams::default(), seed)),
        GeneratorKind::Random => Box::new(RandomGenerator::new(seed)),
    }
}

/// Operators usable inside token trees: the set without `identity`.
pub(crate) fn token_ops(ops: &OperatorSet) -> Vec<Op> {
    ops.ops.iter().copied().filter(|&o| o != Op::Identity).collect()
}

/// Variables that always occupy slots: all of them when they leave room for
/// at least one token, otherwise a uniform subset of `n_slots - 1`.
pub(crate) fn choose_variables(vars: &[String], n_slots: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    if vars.len() < n_slots || n_slots <= 1 {
        let mut v = vars.to_vec();
        v.truncate(n_slots.max(1));
        return v;
    }
    let mut picked: Vec<String> = vars.choose_multiple(rng, n_slots - 1).cloned().collect();
    picked.sort_by_key(|v| vars.iter().position(|x| x == v));
    picked
}

pub(crate) fn random_leaf(vars: &[String], constants: Option<(f64, f64)>, rng: &mut ChaCha8Rng) -> Expr {
    match constants {
        Some((lo, hi)) if rng.gen_bool(0.2) => Expr::constant(round1(rng.gen_range(lo..=hi))),
        _ => Expr::var(&vars[rng.gen_range(0..vars.len())]),
    }
}

/// Random tree of height at most `max_height` ("grow" method).
pub(crate) fn random_tree(
    ops: &[Op],
    vars: &[String],
    constants: Option<(f64, f64)>,
    max_height: usize,
    rng: &mut ChaCha8Rng,
) -> Expr {
    if max_height == 0 || ops.is_empty() || rng.gen_bool(0.3) {
        return random_leaf(vars, constants, rng);
    }
    let op = ops[rng.gen_range(0..ops.len())];
    if op.is_unary() {
        Expr::unary(op, random_tree(ops, vars, constants, max_height - 1, rng))
    } else {
        let a = random_tree(ops, vars, constants, max_height - 1, rng);
        let b = random_tree(ops, vars, constants, max_height - 1, rng);
        Expr::binary(op, a, b)
    }
}

/// Random tree that is not a bare leaf when the operator set allows.
pub(crate) fn random_composite(
    ops: &[Op],
    vars: &[String],
    constants: Option<(f64, f64)>,
    max_height: usize,
    rng: &mut ChaCha8Rng,
) -> Expr {
    for _ in 0..8 {
        let t = random_tree(ops, vars, constants, max_height, rng);
        if !t.is_leaf() {
            return t;
        }
    }
    random_tree(ops, vars, constants, max_height, rng)
}

pub(crate) fn round1(c: f64) -> f64 {
    (c * 10.0).round() / 10.0 + 0.0
}

/// Fills the slots: chosen variables, then `tokens`, then constants, then
/// random composite trees, skipping duplicates by canonical key.
pub(crate) fn assemble(
    ctx: &GenContext,
    vars: Vec<String>,
    tokens: impl IntoIterator<Item = Expr>,
    constants: &[f64],
    rng: &mut ChaCha8Rng,
) -> TokenBatch {
    let mut seen = HashSet::new();
    let mut slots: Vec<Expr> = Vec::with_capacity(ctx.n_slots);
    let mut push = |e: Expr, slots: &mut Vec<Expr>| {
        if slots.len() < ctx.n_slots && seen.insert(canonical_key(&e)) {
            slots.push(e);
        }
    };
    for v in &vars {
        push(Expr::var(v), &mut slots);
    }
    let mut used_constants = Vec::new();
    let reserved = constants.len().min(ctx.n_slots.saturating_sub(slots.len() + 1));
    let token_limit = ctx.n_slots - reserved;
    for t in tokens {
        if slots.len() >= token_limit {
            break;
        }
        if !t.variables().is_empty() {
            push(t, &mut slots);
        }
    }
    for &c in constants {
        if slots.len() < ctx.n_slots {
            let before = slots.len();
            push(Expr::constant(c), &mut slots);
            if slots.len() > before {
                used_constants.push(c);
            }
        }
    }
    let ops = token_ops(ctx.ops);
    let mut guard = 0;
    while slots.len() < ctx.n_slots && guard < 64 {
        guard += 1;
        push(random_composite(&ops, ctx.vars, None, 2, rng), &mut slots);
    }
    while slots.len() < ctx.n_slots {
        // tiny operator sets can run out of distinct trees
        slots.push(Expr::var(&ctx.vars[slots.len() % ctx.vars.len()]));
    }
    TokenBatch { slot_exprs: slots, constants: used_constants }
}

/// Pre-order indices of the non-leaf nodes of `e`.
pub(crate) fn internal_nodes(e: &Expr) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    e.visit(&mut |n| {
        if !n.is_leaf() {
            out.push(i);
        }
        i += 1;
    });
    out
}

/// Swaps a random internal subtree of `a` for a random internal subtree of
/// `b`; `None` when either has no internal node or the child is too tall.
pub fn crossover(a: &Expr, b: &Expr, max_height: usize, rng: &mut ChaCha8Rng) -> Option<Expr> {
    let ia = internal_nodes(a);
    let ib = internal_nodes(b);
    if ia.is_empty() || ib.is_empty() {
        return None;
    }
    let at = ia[rng.gen_range(0..ia.len())];
    let donor = b.subtrees()[ib[rng.gen_range(0..ib.len())]].clone();
    let child = a.replace_at(at, &donor);
    (child.height() <= max_height).then_some(child)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use rand::SeedableRng;

    #[test]
    fn internal_nodes_preorder() {
        // add(mul(x, x), sin(y)): add=0 mul=1 x=2 x=3 sin=4 y=5
        let e = parse("x*x + sin(y)").unwrap();
        assert_eq!(internal_nodes(&e), vec![0, 1, 4]);
    }

    #[test]
    fn crossover_respects_height_and_is_seeded() {
        let a = parse("sin(x*x) + cos(x)").unwrap();
        let b = parse("exp(x + y) * y").unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let c1 = crossover(&a, &b, 10, &mut r1);
            assert_eq!(c1, crossover(&a, &b, 10, &mut r2));
            if let Some(c) = c1 {
                assert!(c.height() <= 10);
            }
        }
        assert!(crossover(&Expr::var("x"), &b, 10, &mut r1).is_none());
    }

    #[test]
    fn random_trees_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ops = token_ops(&OperatorSet::koza());
        let vars = vec!["x1".to_string()];
        for _ in 0..200 {
            let t = random_tree(&ops, &vars, Some((-3.0, 3.0)), 3, &mut rng);
            assert!(t.height() <= 3);
        }
    }

    #[test]
    fn variable_subset_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vars: Vec<String> = (1..=4).map(|i| format!("x{i}")).collect();
        assert_eq!(choose_variables(&vars, 5, &mut rng).len(), 4);
        let sub = choose_variables(&vars, 3, &mut rng);
        assert_eq!(sub.len(), 2);
        assert!(sub.iter().all(|v| vars.contains(v)));
    }
}
