use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    assemble, choose_variables, crossover, random_composite, random_tree, round1, token_ops, GenContext, TokenBatch,
    TokenGenerator,
};
use crate::data::Dataset;
use crate::expr::{canonical_key, canonicalize, Expr};
use crate::search::pareto::ParetoFront;
use crate::search::reward;

#[derive(Clone, Debug)]
pub struct GpParams {
    pub population: usize,
    pub tournament: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub max_height: usize,
    pub hall_of_fame: usize,
    pub init_height: usize,
    /// Front subtrees injected into the population per feedback.
    pub injections: usize,
    pub injection_height: usize,
    /// Fraction of each generation drawn as fresh random trees.
    pub immigrants: f64,
    /// Probability that a batch carries a hall-of-fame member.
    pub hall_of_fame_rate: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            population: 50,
            tournament: 10,
            crossover: 0.1,
            mutation: 0.5,
            max_height: 10,
            hall_of_fame: 20,
            init_height: 3,
            injections: 4,
            injection_height: 3,
            immigrants: 0.25,
            hall_of_fame_rate: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
struct Individual {
    expr: Expr,
    key: String,
    fitness: f64,
}

/// Genetic programming over token trees. One generation runs per call to
/// `next`; a batch may take one hall-of-fame member and fills the rest from
/// the current population. Feedback credit only lifts hall-of-fame fitness.
pub struct GpGenerator {
    params: GpParams,
    rng: ChaCha8Rng,
    population: Vec<Individual>,
    hall_of_fame: Vec<Individual>,
    credit: HashMap<String, f64>,
}

/// Reward of the best affine rescaling `a·token + b` of a token on `data`.
pub(crate) fn token_fitness(token: &Expr, data: &Dataset, eta: f64) -> f64 {
    let Ok(t) = token.evaluate(data) else { return 0.0 };
    if t.iter().any(|v| !v.is_finite()) {
        return 0.0;
    }
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = data.y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - mt) * (v - mt)).sum();
    let sty: f64 = t.iter().zip(&data.y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let slope = if stt > 1e-300 { sty / stt } else { 0.0 };
    let mse = t
        .iter()
        .zip(&data.y)
        .map(|(a, b)| {
            let r = my + slope * (a - mt) - b;
            r * r
        })
        .sum::<f64>()
        / n;
    reward(mse, token.complexity(), eta)
}

impl GpGenerator {
    pub fn new(params: GpParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            population: Vec::new(),
            hall_of_fame: Vec::new(),
            credit: HashMap::new(),
        }
    }

    /// Fitness values of the hall of fame, best first.
    pub fn hall_of_fame_fitness(&self) -> Vec<f64> {
        self.hall_of_fame.iter().map(|i| i.fitness).collect()
    }

    fn individual(&self, expr: Expr, ctx: &GenContext) -> Individual {
        let expr = canonicalize(&expr);
        let key = expr.to_string();
        let fitness = token_fitness(&expr, ctx.data, ctx.eta);
        Individual { expr, key, fitness }
    }

    fn credited(&self, ind: &Individual) -> Individual {
        let fitness = self.credit.get(&ind.key).map_or(ind.fitness, |c| c.max(ind.fitness));
        Individual { fitness, ..ind.clone() }
    }

    fn tournament(&mut self) -> usize {
        let n = self.population.len();
        let mut best = self.rng.gen_range(0..n);
        for _ in 1..self.params.tournament.min(n) {
            let i = self.rng.gen_range(0..n);
            if self.population[i].fitness > self.population[best].fitness {
                best = i;
            }
        }
        best
    }

    fn mutate(&mut self, e: &Expr, ctx: &GenContext) -> Expr {
        let ops = token_ops(ctx.ops);
        let at = self.rng.gen_range(0..e.size());
        let graft = random_tree(&ops, ctx.vars, ctx.constants, 2, &mut self.rng);
        let child = e.replace_at(at, &graft);
        if child.height() <= self.params.max_height {
            child
        } else {
            e.clone()
        }
    }

    fn initialize(&mut self, ctx: &GenContext) {
        let ops = token_ops(ctx.ops);
        self.population = (0..self.params.population)
            .map(|_| {
                let h = self.rng.gen_range(1..=self.params.init_height);
                let e = random_composite(&ops, ctx.vars, ctx.constants, h, &mut self.rng);
                self.individual(e, ctx)
            })
            .collect();
    }

    fn generation(&mut self, ctx: &GenContext) {
        let mut next = Vec::with_capacity(self.params.population);
        let ops = token_ops(ctx.ops);
        let immigrants = (self.params.population as f64 * self.params.immigrants).round() as usize;
        for _ in 0..immigrants {
            let h = self.rng.gen_range(1..=self.params.init_height);
            let e = random_composite(&ops, ctx.vars, ctx.constants, h, &mut self.rng);
            next.push(self.individual(e, ctx));
        }
        while next.len() < self.params.population {
            let a = self.tournament();
            let mut child = self.population[a].expr.clone();
            if self.rng.gen_bool(self.params.crossover) {
                let b = self.tournament();
                let donor = self.population[b].expr.clone();
                if let Some(c) = crossover(&child, &donor, self.params.max_height, &mut self.rng) {
                    child = c;
                }
            }
            if self.rng.gen_bool(self.params.mutation) {
                child = self.mutate(&child, ctx);
            }
            if child.variables().is_empty() {
                continue;
            }
            next.push(self.individual(child, ctx));
        }
        self.population = next;
    }

    fn update_hall_of_fame(&mut self) {
        for ind in &self.population {
            if ind.fitness <= 0.0 || ind.expr.variables().is_empty() {
                continue;
            }
            let ind = &self.credited(ind);
            if let Some(h) = self.hall_of_fame.iter_mut().find(|h| h.key == ind.key) {
                h.fitness = h.fitness.max(ind.fitness);
            } else if self.hall_of_fame.len() < self.params.hall_of_fame {
                self.hall_of_fame.push(ind.clone());
            } else if let Some(worst) = self.hall_of_fame.last() {
                if ind.fitness > worst.fitness {
                    *self.hall_of_fame.last_mut().unwrap() = ind.clone();
                }
            }
            sort_by_fitness(&mut self.hall_of_fame);
        }
    }
}

fn sort_by_fitness(v: &mut [Individual]) {
    v.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then_with(|| a.key.cmp(&b.key)));
}

impl TokenGenerator for GpGenerator {
    fn next(&mut self, ctx: &GenContext) -> TokenBatch {
        if self.population.is_empty() {
            self.initialize(ctx);
        } else {
            self.generation(ctx);
        }
        self.update_hall_of_fame();
        let vars = choose_variables(ctx.vars, ctx.n_slots, &mut self.rng);
        let mut tokens: Vec<Expr> = Vec::new();
        if self.rng.gen_bool(self.params.hall_of_fame_rate) {
            if let Some(h) = self.hall_of_fame.choose(&mut self.rng) {
                tokens.push(h.expr.clone());
            }
        }
        let mut fresh: Vec<Expr> = self.population.iter().map(|i| i.expr.clone()).collect();
        fresh.shuffle(&mut self.rng);
        tokens.extend(fresh);
        let constants: Vec<f64> = match ctx.constants {
            Some((lo, hi)) => vec![round1(self.rng.gen_range(lo..=hi))],
            None => Vec::new(),
        };
        assemble(ctx, vars, tokens, &constants, &mut self.rng)
    }

    fn feedback(&mut self, ctx: &GenContext, batch: &TokenBatch, best_reward: f64, front: &ParetoFront) {
        for token in &batch.slot_exprs {
            if token.is_leaf() {
                continue;
            }
            let key = canonical_key(token);
            let c = self.credit.entry(key.clone()).or_insert(0.0);
            *c = c.max(best_reward);
            let credited = *c;
            for ind in self.hall_of_fame.iter_mut() {
                if ind.key == key {
                    ind.fitness = ind.fitness.max(credited);
                }
            }
        }
        sort_by_fitness(&mut self.hall_of_fame);

        // seed the population with building blocks of the current front
        let mut blocks: Vec<Expr> = front
            .entries()
            .iter()
            .flat_map(|e| e.expr.subtrees())
            .filter(|s| !s.is_leaf() && !s.variables().is_empty() && s.height() <= self.params.injection_height)
            .collect();
        blocks.sort_by_key(|e| e.to_string());
        blocks.dedup();
        if blocks.is_empty() || self.population.is_empty() {
            return;
        }
        sort_by_fitness(&mut self.population);
        for _ in 0..self.params.injections.min(self.population.len()) {
            let e = blocks[self.rng.gen_range(0..blocks.len())].clone();
            let ind = self.individual(e, ctx);
            if self.population.iter().all(|p| p.key != ind.key) {
                self.population.pop();
                self.population.insert(0, ind);
            }
        }
    }

    fn best(&self) -> Option<Expr> {
        self.hall_of_fame.first().map(|i| i.expr.clone())
    }
}
