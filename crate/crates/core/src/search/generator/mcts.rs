use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{assemble, choose_variables, random_composite, token_ops, GenContext, TokenBatch, TokenGenerator};
use crate::expr::{canonicalize, Expr};
use crate::search::pareto::ParetoFront;

#[derive(Clone, Debug)]
pub struct MctsParams {
    pub exploration: f64,
    /// Constant values sampled per expansion.
    pub constant_candidates: usize,
    /// Batches emitted per constant value.
    pub constant_attempts: usize,
    pub constant_step: f64,
    /// Random height-2 trees added to the token library.
    pub extra_tokens: usize,
}

impl Default for MctsParams {
    fn default() -> Self {
        Self {
            exploration: std::f64::consts::SQRT_2,
            constant_candidates: 2,
            constant_attempts: 3,
            constant_step: 0.1,
            extra_tokens: 24,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Node {
    visits: f64,
    total: f64,
    children: Vec<(usize, usize)>,
    untried: Vec<usize>,
}

struct Pending {
    path: Vec<usize>,
    batch: TokenBatch,
}

/// UCT search over sequences of library tokens, one token per free slot.
pub struct MctsGenerator {
    params: MctsParams,
    rng: ChaCha8Rng,
    library: Vec<Expr>,
    nodes: Vec<Node>,
    depth: usize,
    queue: VecDeque<Pending>,
    current: Option<Vec<usize>>,
    expansions: usize,
}

impl MctsGenerator {
    pub fn new(params: MctsParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            library: Vec::new(),
            nodes: Vec::new(),
            depth: 0,
            queue: VecDeque::new(),
            current: None,
            expansions: 0,
        }
    }

    /// Selection/expansion rounds performed so far.
    pub fn expansions(&self) -> usize {
        self.expansions
    }

    fn build_library(&mut self, ctx: &GenContext) {
        let ops = token_ops(ctx.ops);
        let mut seen = HashSet::new();
        let mut lib = Vec::new();
        let mut add = |e: Expr, lib: &mut Vec<Expr>| {
            let c = canonicalize(&e);
            if !c.is_leaf() && !c.variables().is_empty() && seen.insert(c.to_string()) {
                lib.push(c);
            }
        };
        for op in &ops {
            for (i, a) in ctx.vars.iter().enumerate() {
                if op.is_unary() {
                    add(Expr::unary(*op, Expr::var(a)), &mut lib);
                    continue;
                }
                for (j, b) in ctx.vars.iter().enumerate() {
                    if op.is_commutative() && j < i {
                        continue;
                    }
                    add(Expr::binary(*op, Expr::var(a), Expr::var(b)), &mut lib);
                }
            }
        }
        for _ in 0..self.params.extra_tokens {
            add(random_composite(&ops, ctx.vars, None, 2, &mut self.rng), &mut lib);
        }
        if lib.is_empty() {
            lib.push(Expr::var(&ctx.vars[0]));
        }
        self.library = lib;
    }

    fn fresh_node(&mut self) -> usize {
        let mut untried: Vec<usize> = (0..self.library.len()).collect();
        untried.shuffle(&mut self.rng);
        self.nodes.push(Node { untried, ..Node::default() });
        self.nodes.len() - 1
    }

    fn uct_child(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        let ln = n.visits.max(1.0).ln();
        let score = |child: usize| {
            let c = &self.nodes[child];
            c.total / c.visits.max(1e-12) + self.params.exploration * (ln / c.visits.max(1e-12)).sqrt()
        };
        let mut best = n.children[0];
        for &ch in &n.children[1..] {
            if score(ch.1) > score(best.1) {
                best = ch;
            }
        }
        best.1
    }

    /// One selection + expansion + rollout; returns the node path and tokens.
    fn select(&mut self) -> (Vec<usize>, Vec<Expr>) {
        let mut path = vec![0];
        let mut tokens = Vec::new();
        let mut node = 0;
        while tokens.len() < self.depth {
            if let Some(tok) = self.nodes[node].untried.pop() {
                let child = self.fresh_node();
                self.nodes[node].children.push((tok, child));
                path.push(child);
                tokens.push(self.library[tok].clone());
                break;
            }
            if self.nodes[node].children.is_empty() {
                break;
            }
            let child = self.uct_child(node);
            let tok = self.nodes[node].children.iter().find(|c| c.1 == child).unwrap().0;
            path.push(child);
            tokens.push(self.library[tok].clone());
            node = child;
        }
        while tokens.len() < self.depth {
            tokens.push(self.library[self.rng.gen_range(0..self.library.len())].clone());
        }
        self.expansions += 1;
        (path, tokens)
    }

    fn grid_constant(&mut self, (lo, hi): (f64, f64)) -> f64 {
        let step = self.params.constant_step;
        let k_lo = (lo / step).ceil() as i64;
        let k_hi = (hi / step).floor() as i64;
        let k = if k_hi >= k_lo { self.rng.gen_range(k_lo..=k_hi) } else { 0 };
        ((k as f64) * step * 10.0).round() / 10.0 + 0.0
    }
}

impl TokenGenerator for MctsGenerator {
    fn next(&mut self, ctx: &GenContext) -> TokenBatch {
        if self.library.is_empty() {
            self.build_library(ctx);
            let vars = ctx.vars.len().min(ctx.n_slots.saturating_sub(1)).max(1);
            let consts = usize::from(ctx.constants.is_some());
            self.depth = ctx.n_slots.saturating_sub(vars + consts).max(1);
            self.fresh_node();
        }
        if self.queue.is_empty() {
            let (path, tokens) = self.select();
            let vars = choose_variables(ctx.vars, ctx.n_slots, &mut self.rng);
            match ctx.constants {
                Some(range) => {
                    for _ in 0..self.params.constant_candidates {
                        let c = self.grid_constant(range);
                        for _ in 0..self.params.constant_attempts {
                            let batch = assemble(ctx, vars.clone(), tokens.clone(), &[c], &mut self.rng);
                            self.queue.push_back(Pending { path: path.clone(), batch });
                        }
                    }
                }
                None => {
                    let batch = assemble(ctx, vars, tokens, &[], &mut self.rng);
                    self.queue.push_back(Pending { path, batch });
                }
            }
        }
        let p = self.queue.pop_front().expect("queue was just filled");
        self.current = Some(p.path);
        p.batch
    }

    fn feedback(&mut self, _: &GenContext, _: &TokenBatch, best_reward: f64, _: &ParetoFront) {
        if let Some(path) = self.current.take() {
            for n in path {
                self.nodes[n].visits += 1.0;
                self.nodes[n].total += best_reward;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::expr::OperatorSet;

    fn setup() -> (Vec<String>, OperatorSet, Dataset) {
        let vars = vec!["x1".to_string(), "x2".to_string()];
        let d = Dataset::new(vars.clone(), vec![vec![0.5, 1.0, 1.5], vec![1.0, 2.0, 0.5]], vec![1.0, 2.0, 3.0]).unwrap();
        (vars, OperatorSet::koza(), d)
    }

    #[test]
    fn constant_batches_per_expansion() {
        let (vars, ops, d) = setup();
        let ctx = GenContext { vars: &vars, ops: &ops, n_slots: 5, constants: Some((-1.0, 1.0)), eta: 0.99, data: &d };
        let mut g = MctsGenerator::new(MctsParams::default(), 2);
        let mut per_expansion = std::collections::BTreeMap::<usize, usize>::new();
        for i in 0..60 {
            let b = g.next(&ctx);
            assert_eq!(b.slot_exprs.len(), 5);
            if !b.constants.is_empty() {
                *per_expansion.entry(g.expansions()).or_default() += 1;
                for c in &b.constants {
                    assert!((c * 10.0 - (c * 10.0).round()).abs() < 1e-9 && c.abs() <= 1.0);
                }
            }
            g.feedback(&ctx, &b, (i % 7) as f64 / 7.0, &ParetoFront::new());
        }
        assert!(per_expansion.values().all(|&n| n <= 6));
        assert_eq!(per_expansion.len(), 10);
    }

    #[test]
    fn without_constants_one_batch_per_expansion() {
        let (vars, ops, d) = setup();
        let ctx = GenContext { vars: &vars, ops: &ops, n_slots: 4, constants: None, eta: 0.99, data: &d };
        let mut g = MctsGenerator::new(MctsParams::default(), 2);
        for i in 0..10 {
            let b = g.next(&ctx);
            assert!(b.constants.is_empty());
            assert_eq!(g.expansions(), i + 1);
            g.feedback(&ctx, &b, 0.5, &ParetoFront::new());
        }
        // the root visit count equals the number of feedbacks
        assert_eq!(g.nodes[0].visits, 10.0);
    }
}
