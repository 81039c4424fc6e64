use crate::error::{Error, Result};
use crate::expr::{Expr, OperatorSet};

use super::memory::layer_widths;

/// Largest final width [`enumerate_all`] will materialise.
pub const ENUMERATION_GUARD: u128 = 10_000_000;

/// Every expression of an unmasked network, in flat-index order, built by
/// plain recursion over the operator classes.
pub fn enumerate_all(ops: &OperatorSet, slots: &[Expr], n_layers: usize) -> Result<Vec<Expr>> {
    enumerate_masked(ops, slots, n_layers, None)
}

/// As [`enumerate_all`], keeping only the penultimate expressions listed in
/// `kept` (original indices, ascending) before the final layer.
pub fn enumerate_masked(
    ops: &OperatorSet,
    slots: &[Expr],
    n_layers: usize,
    kept: Option<&[usize]>,
) -> Result<Vec<Expr>> {
    if slots.is_empty() {
        return Err(Error::InvalidArgument("at least one slot is required".into()));
    }
    let widths = layer_widths(ops, slots.len(), n_layers, kept.map(|k| k.len() as u128));
    let total: u128 = widths.iter().skip(1).fold(0u128, |a, &w| a.saturating_add(w));
    if total > ENUMERATION_GUARD {
        return Err(Error::GuardExceeded { count: total, guard: ENUMERATION_GUARD });
    }
    let mut level = slots.to_vec();
    for layer in 0..n_layers {
        if layer + 1 == n_layers {
            if let Some(kept) = kept {
                level = kept.iter().map(|&i| level[i].clone()).collect();
            }
        }
        level = expand(ops, &level);
    }
    Ok(level)
}

pub(crate) fn expand(ops: &OperatorSet, level: &[Expr]) -> Vec<Expr> {
    let w = level.len();
    let mut next = Vec::new();
    for op in ops.unary() {
        next.extend(level.iter().map(|a| Expr::unary(op, a.clone())));
    }
    for op in ops.binary_squared() {
        for a in level {
            for b in level {
                next.push(Expr::binary(op, a.clone(), b.clone()));
            }
        }
    }
    for op in ops.binary_triangled() {
        for i in 0..w {
            for j in i..w {
                next.push(Expr::binary(op.expr_op(), level[i].clone(), level[j].clone()));
            }
        }
    }
    next
}
