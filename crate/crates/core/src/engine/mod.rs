//! The exhaustive evaluation network: stacked symbol layers that evaluate
//! every expression tree of bounded depth over a set of input slots, with
//! subtrees shared across layers, and return the best candidates by MSE.

mod enumerate;
mod layer;
mod memory;
mod topk;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

pub use enumerate::{enumerate_all, enumerate_masked, ENUMERATION_GUARD};
pub use layer::{OffsetColumn, OpBlock, Scalar, SymbolLayer};
pub use memory::{estimate_memory, estimate_memory_with, layer_widths, MemoryEstimate, Precision};

use crate::drmask::{self, DrMask};
use crate::error::{Error, Result};
use crate::expr::{canonical_key, Expr, Op, OperatorSet};
use layer::Segment;
use topk::{Ranked, TopK};

/// Final-layer columns scored per work item.
pub const DEFAULT_BLOCK: usize = 1 << 20;

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub precision: Precision,
    /// Final-layer columns per streamed block.
    pub block_size: usize,
    /// Upper bound on the streamed memory requirement, in bytes.
    pub memory_budget: u128,
    /// Sample count assumed when checking the budget at build time.
    pub samples_hint: usize,
    /// Where DR masks are cached; `None` disables the cache.
    pub cache_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            precision: Precision::Double,
            block_size: DEFAULT_BLOCK,
            memory_budget: 4 << 30,
            samples_hint: 100,
            cache_dir: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeEntry {
    pub flat_index: usize,
    pub mse: f64,
    pub expr: Expr,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalOutcome {
    /// Ascending by `(mse, flat_index)`, canonical keys pairwise distinct.
    pub entries: Vec<OutcomeEntry>,
    pub slot_bindings: Vec<Expr>,
}

#[derive(Clone, Debug)]
pub struct Psrn {
    ops: OperatorSet,
    n_slots: usize,
    layers: Vec<SymbolLayer>,
    mask: Option<DrMask>,
    kept: Option<Vec<usize>>,
    config: EngineConfig,
}

/// Builds a network with the default [`EngineConfig`].
pub fn build_psrn(ops: &OperatorSet, n_slots: usize, n_layers: usize, use_drmask: bool) -> Result<Psrn> {
    Psrn::build(ops, n_slots, n_layers, use_drmask, EngineConfig::default())
}

impl Psrn {
    pub fn build(
        ops: &OperatorSet,
        n_slots: usize,
        n_layers: usize,
        use_drmask: bool,
        config: EngineConfig,
    ) -> Result<Self> {
        let mask = if use_drmask {
            Some(drmask::load_or_compute(ops, n_slots, n_layers, config.cache_dir.as_deref())?)
        } else {
            None
        };
        Self::with_mask(ops, n_slots, n_layers, mask, config)
    }

    /// Builds a network using an already computed mask.
    pub fn with_mask(
        ops: &OperatorSet,
        n_slots: usize,
        n_layers: usize,
        mask: Option<DrMask>,
        config: EngineConfig,
    ) -> Result<Self> {
        if n_slots == 0 || n_layers == 0 {
            return Err(Error::InvalidArgument("n_slots and n_layers must be at least 1".into()));
        }
        if config.block_size == 0 {
            return Err(Error::InvalidArgument("block_size must be positive".into()));
        }
        let kept_count = mask.as_ref().map(|m| m.kept_count as u128);
        let est = estimate_memory_with(
            ops,
            n_slots,
            n_layers,
            config.samples_hint.max(1),
            config.precision,
            kept_count,
            config.block_size,
        );
        if est.streamed_bytes > config.memory_budget {
            return Err(Error::MemoryBudgetExceeded { estimate: est.streamed_bytes, budget: config.memory_budget });
        }
        let mut layers = Vec::with_capacity(n_layers);
        let mut width = n_slots;
        for depth in 0..n_layers {
            if depth + 1 == n_layers {
                if let Some(m) = &mask {
                    if m.keep.len() != width {
                        return Err(Error::LengthMismatch { expected: width, got: m.keep.len() });
                    }
                    width = m.kept_count;
                }
            }
            let layer = SymbolLayer::new(ops, width)?;
            width = layer.output_width();
            layers.push(layer);
        }
        let kept = mask.as_ref().map(DrMask::kept_indices);
        Ok(Self { ops: ops.clone(), n_slots, layers, mask, kept, config })
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[SymbolLayer] {
        &self.layers
    }

    pub fn mask(&self) -> Option<&DrMask> {
        self.mask.as_ref()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn precision(&self) -> Precision {
        self.config.precision
    }

    pub fn set_block_size(&mut self, block_size: usize) {
        self.config.block_size = block_size.max(1);
    }

    /// Number of candidate expressions in the final layer.
    pub fn final_width(&self) -> usize {
        self.layers.last().expect("at least one layer").output_width()
    }

    /// Abstract slot variables `s0, s1, ...`.
    pub fn slot_symbols(&self) -> Vec<Expr> {
        (0..self.n_slots).map(|i| Expr::var(&format!("s{i}"))).collect()
    }

    fn check_slots(&self, slot_values: &[Vec<f64>]) -> Result<usize> {
        if slot_values.len() != self.n_slots {
            return Err(Error::LengthMismatch { expected: self.n_slots, got: slot_values.len() });
        }
        let n = slot_values[0].len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        for col in slot_values {
            if col.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: col.len() });
            }
        }
        Ok(n)
    }

    fn check_budget(&self, n: usize) -> Result<()> {
        let est = estimate_memory_with(
            &self.ops,
            self.n_slots,
            self.layers.len(),
            n,
            self.config.precision,
            self.mask.as_ref().map(|m| m.kept_count as u128),
            self.config.block_size,
        );
        if est.streamed_bytes > self.config.memory_budget {
            return Err(Error::MemoryBudgetExceeded { estimate: est.streamed_bytes, budget: self.config.memory_budget });
        }
        Ok(())
    }

    /// Values feeding the final layer, `n x width` row-major, mask applied.
    fn penultimate<T: Scalar>(&self, slot_values: &[Vec<f64>], n: usize) -> Vec<T> {
        let w0 = self.n_slots;
        let mut h = vec![T::default(); n * w0];
        for (c, col) in slot_values.iter().enumerate() {
            for (s, &v) in col.iter().enumerate() {
                h[s * w0 + c] = T::from_f64(v);
            }
        }
        let (last, inner) = self.layers.split_last().expect("at least one layer");
        for layer in inner {
            h = layer.evaluate(&h, n);
        }
        if let Some(kept) = &self.kept {
            let w = self.layers.len().checked_sub(2).map_or(w0, |i| self.layers[i].output_width());
            let mut out = Vec::with_capacity(n * kept.len());
            for s in 0..n {
                let row = &h[s * w..(s + 1) * w];
                out.extend(kept.iter().map(|&c| row[c]));
            }
            h = out;
        }
        debug_assert_eq!(h.len(), n * last.input_width());
        h
    }

    /// Scores flat columns `[a, b)`, calling `visit(first_index, mses)` per segment.
    fn score_range<T: Scalar>(
        &self,
        h: &[T],
        y: &[T],
        a: usize,
        b: usize,
        mut visit: impl FnMut(usize, &[f64]),
    ) {
        let last = self.layers.last().expect("at least one layer");
        let w = last.input_width();
        let n = y.len();
        let inv_n = 1.0 / n as f64;
        let mut acc: Vec<T> = Vec::new();
        let mut mse: Vec<f64> = Vec::new();
        last.for_each_segment(a, b, |seg| {
            let flat0 = match seg {
                Segment::Unary { op, c0, c1, flat0 } => {
                    acc.clear();
                    acc.resize(c1 - c0, T::default());
                    for s in 0..n {
                        let row = &h[s * w + c0..s * w + c1];
                        let ys = y[s];
                        for (acc, &x) in acc.iter_mut().zip(row) {
                            let d = T::apply1(op, x) - ys;
                            *acc = *acc + d * d;
                        }
                    }
                    flat0
                }
                Segment::Row { op, i, j0, j1, flat0 } => {
                    acc.clear();
                    acc.resize(j1 - j0, T::default());
                    for s in 0..n {
                        let row = &h[s * w..(s + 1) * w];
                        accumulate_row(op, row[i], &row[j0..j1], y[s], &mut acc);
                    }
                    flat0
                }
            };
            mse.clear();
            mse.extend(acc.iter().map(|&v| {
                let m = v.to_f64() * inv_n;
                if m.is_finite() {
                    m
                } else {
                    f64::INFINITY
                }
            }));
            visit(flat0, &mse);
        });
    }

    /// Scores every candidate and returns the best `k` with distinct
    /// canonical keys. `bindings` are the expressions fed to the slots.
    pub fn forward(&self, slot_values: &[Vec<f64>], y: &[f64], k: usize, bindings: &[Expr]) -> Result<EvalOutcome> {
        let n = self.check_slots(slot_values)?;
        if y.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: y.len() });
        }
        if bindings.len() != self.n_slots {
            return Err(Error::LengthMismatch { expected: self.n_slots, got: bindings.len() });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        self.check_budget(n)?;
        let ranked = match self.config.precision {
            Precision::Double => self.forward_typed::<f64>(slot_values, y, k, bindings),
            Precision::Single => self.forward_typed::<f32>(slot_values, y, k, bindings),
        };
        Ok(EvalOutcome {
            entries: ranked
                .into_iter()
                .map(|r| OutcomeEntry { flat_index: r.index, mse: r.mse, expr: r.expr })
                .collect(),
            slot_bindings: bindings.to_vec(),
        })
    }

    fn forward_typed<T: Scalar>(&self, slot_values: &[Vec<f64>], y: &[f64], k: usize, bindings: &[Expr]) -> Vec<Ranked> {
        let n = y.len();
        let h = self.penultimate::<T>(slot_values, n);
        let yt: Vec<T> = y.iter().map(|&v| T::from_f64(v)).collect();
        let total = self.final_width();
        let block = self.config.block_size;
        let n_blocks = total.div_ceil(block);
        let partial: Vec<TopK> = (0..n_blocks)
            .into_par_iter()
            .map(|bi| {
                let a = bi * block;
                let b = (a + block).min(total);
                let mut top = TopK::new(k);
                self.score_range(&h, &yt, a, b, |flat0, mses| {
                    for (q, &m) in mses.iter().enumerate() {
                        let index = flat0 + q;
                        if top.admits(m, index) {
                            let expr = self.deduce_at(self.layers.len(), index, bindings);
                            let key = canonical_key(&expr);
                            top.offer(Ranked { mse: m, index, key, expr });
                        }
                    }
                });
                top
            })
            .collect();
        partial
            .into_iter()
            .fold(TopK::new(k), TopK::merge)
            .into_sorted()
    }

    /// MSE of every candidate in flat-index order. Guarded like [`enumerate_all`].
    pub fn score_all(&self, slot_values: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
        let n = self.check_slots(slot_values)?;
        if y.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: y.len() });
        }
        self.guard()?;
        let mut out = Vec::with_capacity(self.final_width());
        let total = self.final_width();
        match self.config.precision {
            Precision::Double => {
                let h = self.penultimate::<f64>(slot_values, n);
                self.score_range(&h, y, 0, total, |_, m| out.extend_from_slice(m));
            }
            Precision::Single => {
                let h = self.penultimate::<f32>(slot_values, n);
                let yt: Vec<f32> = y.iter().map(|&v| v as f32).collect();
                self.score_range(&h, &yt, 0, total, |_, m| out.extend_from_slice(m));
            }
        }
        Ok(out)
    }

    /// Values of every candidate column, one vector per flat index.
    pub fn evaluate_all(&self, slot_values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.check_slots(slot_values)?;
        self.guard()?;
        let last = self.layers.last().expect("at least one layer");
        let w = last.output_width();
        let rows: Vec<f64> = match self.config.precision {
            Precision::Double => last.evaluate(&self.penultimate::<f64>(slot_values, n), n),
            Precision::Single => last
                .evaluate(&self.penultimate::<f32>(slot_values, n), n)
                .into_iter()
                .map(f64::from)
                .collect(),
        };
        Ok((0..w).map(|c| (0..n).map(|s| rows[s * w + c]).collect()).collect())
    }

    fn guard(&self) -> Result<()> {
        let total = self.final_width() as u128;
        if total > ENUMERATION_GUARD {
            return Err(Error::GuardExceeded { count: total, guard: ENUMERATION_GUARD });
        }
        Ok(())
    }

    /// Reconstructs the expression at a final-layer flat index.
    pub fn deduce(&self, flat_index: usize, slot_bindings: &[Expr]) -> Result<Expr> {
        if flat_index >= self.final_width() {
            return Err(Error::IndexOutOfRange { index: flat_index, width: self.final_width() });
        }
        if slot_bindings.len() != self.n_slots {
            return Err(Error::LengthMismatch { expected: self.n_slots, got: slot_bindings.len() });
        }
        Ok(self.deduce_at(self.layers.len(), flat_index, slot_bindings))
    }

    fn deduce_at(&self, depth: usize, col: usize, bindings: &[Expr]) -> Expr {
        if depth == 0 {
            return bindings[col].clone();
        }
        let layer = &self.layers[depth - 1];
        let off = layer.offset(col).expect("column in range");
        let op = layer.ops()[off.operator_index];
        let child = |c: usize| {
            let c = match &self.kept {
                Some(kept) if depth == self.layers.len() => kept[c],
                _ => c,
            };
            self.deduce_at(depth - 1, c, bindings)
        };
        match off.right_child {
            None => Expr::unary(op, child(off.left_child)),
            Some(r) => Expr::binary(op.expr_op(), child(off.left_child), child(r)),
        }
    }
}

#[inline(always)]
fn accumulate_with<T: Scalar>(acc: &mut [T], bs: &[T], f: impl Fn(T) -> T) {
    for (s, &b) in acc.iter_mut().zip(bs) {
        let d = f(b);
        *s = *s + d * d;
    }
}

#[inline]
fn accumulate_row<T: Scalar>(op: Op, a: T, bs: &[T], ys: T, acc: &mut [T]) {
    match op {
        Op::Add => accumulate_with(acc, bs, |b| a + b - ys),
        Op::Mul => accumulate_with(acc, bs, |b| a * b - ys),
        Op::Sub | Op::SemiSub => accumulate_with(acc, bs, |b| a - b - ys),
        Op::Div | Op::SemiDiv => accumulate_with(acc, bs, |b| a / b - ys),
        _ => unreachable!("{op} is not binary"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Columns, Op};

    fn xs(names: &[&str]) -> Vec<Expr> {
        names.iter().map(|n| Expr::var(n)).collect()
    }

    #[test]
    fn identity_target_is_exact() {
        let p = build_psrn(&OperatorSet::arithmetic(), 1, 1, false).unwrap();
        let x = vec![0.5, 1.5, -2.0, 3.0];
        let out = p.forward(&[x.clone()], &x, 1, &xs(&["x"])).unwrap();
        assert_eq!(out.entries[0].mse, 0.0);
        assert_eq!(canonical_key(&out.entries[0].expr), "x");
        assert_eq!(out.entries[0].flat_index, 0);
    }

    #[test]
    fn sum_target_found_in_add_block() {
        let p = build_psrn(&OperatorSet::arithmetic(), 2, 1, false).unwrap();
        let x1 = vec![0.5, 1.5, -2.0, 3.0, 0.1];
        let x2 = vec![1.0, -0.5, 2.5, 0.3, 0.7];
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        let out = p.forward(&[x1, x2], &y, 3, &xs(&["x1", "x2"])).unwrap();
        assert_eq!(out.entries[0].mse, 0.0);
        assert_eq!(out.entries[0].expr.to_string(), "x1 + x2");
        // identity(2) | sub(4) | div(4) | add(0,0) add(0,1)
        assert_eq!(out.entries[0].flat_index, 11);
    }

    #[test]
    fn non_finite_columns_are_quarantined() {
        let p = build_psrn(&OperatorSet::koza(), 1, 1, false).unwrap();
        let x = vec![0.5, -1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.ln()).collect();
        let scores = p.score_all(&[x.clone()], &y).unwrap();
        let all = enumerate_all(p.ops(), &xs(&["x"]), 1).unwrap();
        for (e, m) in all.iter().zip(&scores) {
            let vals = e.evaluate(&Columns::new(3).with("x", &x)).unwrap();
            if vals.iter().any(|v| !v.is_finite()) {
                assert_eq!(*m, f64::INFINITY, "{e}");
            }
        }
        let log_idx = all.iter().position(|e| e.to_string() == "log(x)").unwrap();
        assert_eq!(scores[log_idx], f64::INFINITY);
        let out = p.forward(&[x], &y, 9, &xs(&["x"])).unwrap();
        assert!(out.entries.iter().all(|e| e.flat_index != log_idx || e.mse.is_infinite()));
    }

    #[test]
    fn deduce_block_arithmetic() {
        let p = build_psrn(&OperatorSet::koza(), 3, 1, false).unwrap();
        let b = xs(&["a", "b", "c"]);
        // identity(3) | sin(3): position 1 of sin is index 4
        assert_eq!(p.deduce(4, &b).unwrap().to_string(), "sin(b)");
        assert!(p.deduce(p.final_width(), &b).is_err());
    }

    #[test]
    fn deduce_matches_enumeration() {
        for ops in OperatorSet::presets() {
            let p = build_psrn(&ops, 2, 2, false).unwrap();
            let b = xs(&["x1", "x2"]);
            let all = enumerate_all(&ops, &b, 2).unwrap();
            assert_eq!(all.len(), p.final_width());
            for (i, e) in all.iter().enumerate() {
                assert_eq!(&p.deduce(i, &b).unwrap(), e, "{} #{i}", ops.name);
            }
        }
    }

    #[test]
    fn width_recursion_for_presets() {
        for ops in OperatorSet::presets() {
            for w in 1..=8usize {
                let l = SymbolLayer::new(&ops, w).unwrap();
                let w = w as u128;
                let expected = ops.n_unary() as u128 * w
                    + ops.n_squared() as u128 * w * w
                    + ops.n_triangled() as u128 * w * (w + 1) / 2;
                assert_eq!(l.output_width() as u128, expected);
            }
        }
    }

    #[test]
    fn memory_budget_is_enforced() {
        let cfg = EngineConfig { memory_budget: 1000, ..EngineConfig::default() };
        match Psrn::build(&OperatorSet::koza(), 3, 2, false, cfg) {
            Err(Error::MemoryBudgetExceeded { estimate, budget }) => {
                assert!(estimate > budget);
                assert_eq!(budget, 1000);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn k_larger_than_width_returns_everything_distinct() {
        let sin = OperatorSet::new("s", vec![Op::Sin, Op::Identity]).unwrap();
        let p = build_psrn(&sin, 1, 2, false).unwrap();
        let x = vec![0.1, 0.2];
        let out = p.forward(&[x.clone()], &x, 100, &xs(&["x"])).unwrap();
        // identity(identity(x)), identity(sin(x)), sin(identity(x)), sin(sin(x))
        assert_eq!(out.entries.len(), 3);
    }
}
