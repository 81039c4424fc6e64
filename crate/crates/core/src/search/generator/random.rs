use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{assemble, choose_variables, random_composite, round1, token_ops, GenContext, TokenBatch, TokenGenerator};
use crate::search::pareto::ParetoFront;

/// Uniform random trees of height at most 3; no learning.
pub struct RandomGenerator {
    rng: ChaCha8Rng,
}

impl RandomGenerator {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl TokenGenerator for RandomGenerator {
    fn next(&mut self, ctx: &GenContext) -> TokenBatch {
        let vars = choose_variables(ctx.vars, ctx.n_slots, &mut self.rng);
        let ops = token_ops(ctx.ops);
        let free = ctx.n_slots.saturating_sub(vars.len());
        let tokens: Vec<_> = (0..free + 4).map(|_| random_composite(&ops, ctx.vars, None, 3, &mut self.rng)).collect();
        let constants: Vec<f64> = match ctx.constants {
            Some((lo, hi)) => vec![round1(self.rng.gen_range(lo..=hi))],
            None => Vec::new(),
        };
        assemble(ctx, vars, tokens, &constants, &mut self.rng)
    }

    fn feedback(&mut self, _: &GenContext, _: &TokenBatch, _: f64, _: &ParetoFront) {}
}
