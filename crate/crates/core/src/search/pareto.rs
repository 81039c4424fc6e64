use serde::Serialize;

use crate::expr::{canonical_key, Expr};

#[derive(Clone, Debug, Serialize)]
pub struct ParetoEntry {
    pub expr: Expr,
    pub complexity: usize,
    pub mse: f64,
    pub reward: f64,
    #[serde(skip)]
    key: String,
}

impl ParetoEntry {
    pub fn new(expr: Expr, mse: f64, reward: f64) -> Self {
        let key = canonical_key(&expr);
        Self { complexity: expr.complexity(), expr, mse, reward, key }
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    /// No worse on both axes and strictly better on one.
    pub fn dominates(&self, other: &ParetoEntry) -> bool {
        self.mse <= other.mse
            && self.complexity <= other.complexity
            && (self.mse < other.mse || self.complexity < other.complexity)
    }
}

/// Non-dominated `(mse, complexity)` entries, sorted by complexity then MSE.
#[derive(Clone, Debug, Default, Serialize)]
#[serde(transparent)]
pub struct ParetoFront {
    entries: Vec<ParetoEntry>,
}

impl ParetoFront {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ParetoEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_reward(&self) -> f64 {
        self.entries.iter().map(|e| e.reward).fold(0.0, f64::max)
    }

    /// Highest-reward entry, ties to lower complexity.
    pub fn best(&self) -> Option<&ParetoEntry> {
        self.entries.iter().min_by(|a, b| {
            b.reward.total_cmp(&a.reward).then(a.complexity.cmp(&b.complexity))
        })
    }

    /// Inserts a candidate; returns whether the front changed. Entries with
    /// non-finite MSE are ignored.
    pub fn update(&mut self, cand: ParetoEntry) -> bool {
        if !cand.mse.is_finite() {
            return false;
        }
        if let Some(pos) = self.entries.iter().position(|e| e.key == cand.key) {
            if cand.mse >= self.entries[pos].mse {
                return false;
            }
            self.entries.remove(pos);
        }
        if self.entries.iter().any(|e| e.dominates(&cand)) {
            return false;
        }
        self.entries.retain(|e| !cand.dominates(e));
        let at = self.entries.partition_point(|e| {
            (e.complexity, e.mse, e.key.as_str()) < (cand.complexity, cand.mse, cand.key.as_str())
        });
        self.entries.insert(at, cand);
        true
    }
}

pub fn update_front(front: &mut ParetoFront, candidates: impl IntoIterator<Item = ParetoEntry>) -> bool {
    let mut changed = false;
    for c in candidates {
        changed |= front.update(c);
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::reward;
    use proptest::prelude::*;

    fn entry(name: &str, complexity: usize, mse: f64) -> ParetoEntry {
        // a chain of `complexity` negations over a distinct variable
        let mut e = Expr::var(name);
        for _ in 0..complexity {
            e = Expr::unary(crate::expr::Op::Sin, e);
        }
        ParetoEntry::new(e, mse, reward(mse, complexity, 0.99))
    }

    #[test]
    fn dominance_removes_worse() {
        let mut f = ParetoFront::new();
        assert!(f.update(entry("a", 5, 0.0)));
        assert!(f.update(entry("b", 3, 0.0)));
        assert_eq!(f.len(), 1);
        assert_eq!(f.entries()[0].complexity, 3);
        assert!(!f.update(entry("c", 4, 0.1)));
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn duplicate_key_keeps_lower_mse() {
        let mut f = ParetoFront::new();
        f.update(entry("a", 2, 0.5));
        f.update(entry("b", 1, 1.0));
        assert!(f.update(entry("a", 2, 0.3)));
        assert!(!f.update(entry("a", 2, 0.4)));
        assert_eq!(f.entries().iter().filter(|e| e.key() == "sin(sin(a))").count(), 1);
        assert_eq!(f.entries()[1].mse, 0.3);
    }

    fn brute_front(items: &[(usize, usize, u8)]) -> Vec<(usize, u64)> {
        let entries: Vec<ParetoEntry> =
            items.iter().map(|&(v, c, m)| entry(&format!("v{v}"), c, m as f64 / 4.0)).collect();
        let mut best: std::collections::BTreeMap<String, ParetoEntry> = Default::default();
        for e in entries {
            match best.get(e.key()) {
                Some(b) if b.mse <= e.mse => {}
                _ => {
                    best.insert(e.key().to_string(), e);
                }
            }
        }
        let all: Vec<_> = best.into_values().collect();
        let mut out: Vec<(usize, u64)> = all
            .iter()
            .filter(|e| !all.iter().any(|o| o.dominates(e)))
            .map(|e| (e.complexity, e.mse.to_bits()))
            .collect();
        out.sort();
        out
    }

    proptest! {
        #[test]
        fn order_independent(items in prop::collection::vec((0usize..4, 0usize..6, 0u8..8), 1..30), seed in any::<u64>()) {
            let mut shuffled = items.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let run = |xs: &[(usize, usize, u8)]| {
                let mut f = ParetoFront::new();
                let mut last = 0.0;
                for &(v, c, m) in xs {
                    f.update(entry(&format!("v{v}"), c, m as f64 / 4.0));
                    assert!(f.max_reward() >= last);
                    last = f.max_reward();
                }
                let mut got: Vec<(usize, u64)> = f.entries().iter().map(|e| (e.complexity, e.mse.to_bits())).collect();
                got.sort();
                got
            };
            prop_assert_eq!(run(&items), brute_front(&items));
            prop_assert_eq!(run(&shuffled), brute_front(&items));
        }
    }
}
