use std::cmp::Ordering;

use crate::expr::Expr;

#[derive(Clone, Debug)]
pub(crate) struct Ranked {
    pub mse: f64,
    pub index: usize,
    pub key: String,
    pub expr: Expr,
}

/// `(mse, index)` order; MSE values are never NaN here.
#[inline]
pub(crate) fn better(m1: f64, i1: usize, m2: f64, i2: usize) -> bool {
    match m1.partial_cmp(&m2) {
        Some(Ordering::Less) => true,
        Some(Ordering::Equal) => i1 < i2,
        _ => false,
    }
}

/// Best `k` candidates with pairwise distinct canonical keys, sorted by
/// `(mse, index)`. Each key is represented by its best candidate.
#[derive(Debug)]
pub(crate) struct TopK {
    k: usize,
    entries: Vec<Ranked>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self { k, entries: Vec::with_capacity(k + 1) }
    }

    /// False when the candidate cannot enter whatever its key.
    #[inline]
    pub fn admits(&self, mse: f64, index: usize) -> bool {
        match self.entries.last() {
            Some(worst) if self.entries.len() >= self.k => better(mse, index, worst.mse, worst.index),
            _ => true,
        }
    }

    pub fn offer(&mut self, cand: Ranked) {
        if !self.admits(cand.mse, cand.index) {
            return;
        }
        if let Some(pos) = self.entries.iter().position(|e| e.key == cand.key) {
            let cur = &self.entries[pos];
            if !better(cand.mse, cand.index, cur.mse, cur.index) {
                return;
            }
            self.entries.remove(pos);
        }
        let at = self.entries.partition_point(|e| better(e.mse, e.index, cand.mse, cand.index));
        self.entries.insert(at, cand);
        self.entries.truncate(self.k);
    }

    pub fn merge(mut self, other: TopK) -> TopK {
        for e in other.entries {
            self.offer(e);
        }
        self
    }

    pub fn into_sorted(self) -> Vec<Ranked> {
        self.entries
    }
}
