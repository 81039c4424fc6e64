//! The outer search loop: a token generator proposes slot expressions, the
//! network scores every tree over them, constants are refined and the Pareto
//! front drives feedback.

mod fit;
pub mod generator;
mod pareto;
mod reward;

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{fit_constants, fit_constants_with_mse, mse_on};
pub use generator::{
    crossover, make_generator, GenContext, GeneratorKind, GpGenerator, GpParams, MctsGenerator, MctsParams,
    RandomGenerator, TokenBatch, TokenGenerator,
};
pub use pareto::{update_front, ParetoEntry, ParetoFront};
pub use reward::{downsample, downsample_rows, reward};

use crate::data::Dataset;
use crate::engine::{EngineConfig, Precision, Psrn};
use crate::error::{Error, Result};
use crate::expr::{canonical_key, canonicalize, Expr, OperatorSet};

/// Iterations an exact fit must stay the simplest exact entry before stopping.
const EXACT_CONFIRM_ITERS: usize = 3;
/// Crossover children added to the pool per iteration after warm-up.
const CROSSOVERS_PER_ITER: usize = 4;
const MAX_CROSSOVER_HEIGHT: usize = 10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchConfig {
    pub ops: OperatorSet,
    pub n_slots: usize,
    pub n_layers: usize,
    pub top_k: usize,
    /// Wall-clock budget in seconds.
    pub t_max: Option<f64>,
    pub max_iters: Option<usize>,
    pub down_sample: usize,
    pub const_range: (f64, f64),
    pub use_constants: bool,
    pub eta: f64,
    pub generator: GeneratorKind,
    pub seed: u64,
    pub warmup_iters: usize,
    pub stall_iters: usize,
    pub exact_mse_eps: f64,
    pub use_drmask: bool,
    pub precision: Precision,
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            ops: OperatorSet::koza(),
            n_slots: 3,
            n_layers: 3,
            top_k: 10,
            t_max: Some(60.0),
            max_iters: None,
            down_sample: 20,
            const_range: (-3.0, 3.0),
            use_constants: false,
            eta: 0.99,
            generator: GeneratorKind::Gp,
            seed: 0,
            warmup_iters: 5,
            stall_iters: 20,
            exact_mse_eps: 1e-10,
            use_drmask: true,
            precision: Precision::Double,
            cache_dir: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if self.n_slots == 0 || self.n_layers == 0 {
            return bad("n_slots and n_layers must be at least 1");
        }
        if self.down_sample == 0 {
            return bad("down_sample must be at least 1");
        }
        if !(self.const_range.0 < self.const_range.1) {
            return bad("const_range must satisfy lo < hi");
        }
        if matches!(self.t_max, Some(t) if !(t > 0.0)) {
            return bad("t_max must be positive");
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            precision: self.precision,
            samples_hint: self.down_sample,
            cache_dir: self.cache_dir.clone(),
            ..EngineConfig::default()
        }
    }

    pub fn build_engine(&self) -> Result<Psrn> {
        self.validate()?;
        Psrn::build(&self.ops, self.n_slots, self.n_layers, self.use_drmask, self.engine_config())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TimeLimit,
    MaxIters,
    Stalled,
    ExactFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub iterations: usize,
    pub wall_seconds: f64,
    /// Candidate expressions scored by the network.
    pub evaluations: u64,
    pub stop_reason: StopReason,
    pub front: ParetoFront,
    pub seed: u64,
    pub config: SearchConfig,
}

impl RunReport {
    /// Report JSON with the timing field removed.
    pub fn deterministic_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("wall_seconds");
        }
        v
    }
}

pub fn run_search(data: &Dataset, config: &SearchConfig) -> Result<RunReport> {
    let engine = config.build_engine()?;
    run_search_with(data, config, &engine)
}

/// Ordinary least squares `b0 + Σ bi·xi` over the raw variables.
pub fn linear_regression(data: &Dataset) -> Option<Expr> {
    let n = data.n_rows();
    let m = data.n_vars();
    let a = DMatrix::from_fn(n, m + 1, |r, c| if c == 0 { 1.0 } else { data.x[c - 1][r] });
    let y = DVector::from_column_slice(&data.y);
    let coef = a.svd(true, true).solve(&y, 1e-12).ok()?;
    if coef.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let mut e = Expr::constant(coef[0]);
    for (i, name) in data.names.iter().enumerate() {
        e = Expr::add(e, Expr::mul(Expr::constant(coef[i + 1]), Expr::var(name)));
    }
    Some(e)
}

fn clean_dataset(data: &Dataset) -> Result<Dataset> {
    if data.n_rows() == 0 || data.n_vars() == 0 {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<usize> = (0..data.n_rows()).filter(|&r| data.y[r].is_finite()).collect();
    if rows.is_empty() {
        return Err(Error::NonFiniteTarget);
    }
    let clean = if rows.len() == data.n_rows() { data.clone() } else { data.select_rows(&rows) };
    if clean.n_rows() < 2 {
        return Err(Error::EmptyDataset);
    }
    Ok(clean)
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the search with a prebuilt network whose shape matches `config`.
pub fn run_search_with(data: &Dataset, config: &SearchConfig, engine: &Psrn) -> Result<RunReport> {
    config.validate()?;
    if engine.n_slots() != config.n_slots || engine.n_layers() != config.n_layers {
        return Err(Error::InvalidArgument("engine shape does not match the search config".into()));
    }
    let data = clean_dataset(data)?;
    let start = Instant::now();
    let mut generator = make_generator(config.generator, stream(config.seed, 1).next_u64());
    let mut sample_rng = stream(config.seed, 2);
    let mut cross_rng = stream(config.seed, 3);
    let constants = config.use_constants.then_some(config.const_range);

    let mut front = ParetoFront::new();
    let mut iterations = 0;
    let mut evaluations: u64 = 0;
    let mut stall = 0;
    let mut exact_key: Option<String> = None;
    let mut exact_streak = 0;
    let stop_reason = loop {
        if let Some(limit) = config.max_iters {
            if iterations >= limit {
                break StopReason::MaxIters;
            }
        }
        if let Some(t) = config.t_max {
            if start.elapsed().as_secs_f64() >= t {
                break StopReason::TimeLimit;
            }
        }

        let rows = reward::downsample_rows_with(data.n_rows(), config.down_sample, &mut sample_rng);
        let sub = data.select_rows(&rows);
        let ctx = GenContext {
            vars: &data.names,
            ops: &config.ops,
            n_slots: config.n_slots,
            constants,
            eta: config.eta,
            data: &sub,
        };
        let batch = generator.next(&ctx);
        let slot_values = batch
            .slot_exprs
            .iter()
            .map(|e| e.evaluate(&sub))
            .collect::<Result<Vec<_>>>()?;
        let outcome = engine.forward(&slot_values, &sub.y, config.top_k, &batch.slot_exprs)?;
        evaluations += engine.final_width() as u64;

        let mut pool: Vec<Expr> = outcome.entries.into_iter().map(|e| e.expr).collect();
        let n_engine = pool.len();
        pool.extend(generator.best());
        if iterations >= config.warmup_iters && front.len() >= 2 {
            for _ in 0..CROSSOVERS_PER_ITER {
                let pick = index::sample(&mut cross_rng, front.len(), 2);
                let a = &front.entries()[pick.index(0)].expr;
                let b = &front.entries()[pick.index(1)].expr;
                pool.extend(crossover(a, b, MAX_CROSSOVER_HEIGHT, &mut cross_rng));
            }
        }
        if constants.is_some() && config.warmup_iters > 0 && iterations % config.warmup_iters == 0 {
            let mean = data.y.iter().sum::<f64>() / data.n_rows() as f64;
            pool.push(Expr::constant(mean));
            pool.extend(linear_regression(&data));
        }

        let mut seen = std::collections::HashSet::new();
        let pool: Vec<(usize, Expr)> = pool
            .into_iter()
            .enumerate()
            .map(|(i, e)| (i, canonicalize(&e)))
            .filter(|(_, e)| seen.insert(e.to_string()))
            .collect();
        let scored: Vec<(usize, ParetoEntry)> = pool
            .par_iter()
            .map(|(i, e)| {
                let (fitted, mse) = if constants.is_some() {
                    let (f, m) = fit_constants_with_mse(e, &data);
                    (canonicalize(&f), m)
                } else {
                    (e.clone(), mse_on(e, &data))
                };
                let r = reward(mse, fitted.complexity(), config.eta);
                (*i, ParetoEntry::new(fitted, mse, r))
            })
            .collect();

        let best_reward = scored
            .iter()
            .filter(|(i, _)| *i < n_engine)
            .map(|(_, e)| e.reward)
            .fold(0.0, f64::max);
        let before = front.max_reward();
        update_front(&mut front, scored.into_iter().map(|(_, e)| e));
        debug_assert!(front.max_reward() >= before);
        generator.feedback(&ctx, &batch, best_reward, &front);
        iterations += 1;

        if front.max_reward() > before {
            stall = 0;
        } else {
            stall += 1;
        }
        let simplest_exact = front
            .entries()
            .iter()
            .find(|e| e.mse < config.exact_mse_eps)
            .map(|e| canonical_key(&e.expr));
        if simplest_exact.is_some() && simplest_exact == exact_key {
            exact_streak += 1;
        } else {
            exact_streak = usize::from(simplest_exact.is_some());
            exact_key = simplest_exact;
        }
        if exact_streak >= EXACT_CONFIRM_ITERS {
            break StopReason::ExactFit;
        }
        if config.stall_iters > 0 && stall >= config.stall_iters {
            break StopReason::Stalled;
        }
    };

    Ok(RunReport {
        iterations,
        wall_seconds: start.elapsed().as_secs_f64(),
        evaluations,
        stop_reason,
        front,
        seed: config.seed,
        config: config.clone(),
    })
}
