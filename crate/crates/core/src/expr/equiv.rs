use std::collections::BTreeMap;

use super::canon::{canonical_key, canonicalize, round_constants};
use super::tree::Expr;

/// Number of quasi-random points used by the numeric equivalence fallback.
pub const EQUIV_POINTS: usize = 64;
/// Relative tolerance of the numeric equivalence fallback.
pub const EQUIV_TOL: f64 = 1e-6;

/// Per-variable sampling intervals.
#[derive(Clone, Debug)]
pub struct Domain {
    intervals: BTreeMap<String, (f64, f64)>,
    default: (f64, f64),
}

impl Default for Domain {
    fn default() -> Self {
        Self { intervals: BTreeMap::new(), default: (-1.0, 1.0) }
    }
}

impl Domain {
    pub fn new(default: (f64, f64)) -> Self {
        Self { intervals: BTreeMap::new(), default }
    }

    pub fn with(mut self, var: &str, lo: f64, hi: f64) -> Self {
        self.intervals.insert(var.to_string(), (lo, hi));
        self
    }

    pub fn interval(&self, var: &str) -> (f64, f64) {
        self.intervals.get(var).copied().unwrap_or(self.default)
    }
}

/// Radical inverse in `base`; the Halton sequence component.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `m` Halton points for the given variables inside `domain`.
pub fn halton_points(vars: &[String], domain: &Domain, m: usize) -> Vec<Vec<f64>> {
    (1..=m as u64)
        .map(|i| {
            vars.iter()
                .enumerate()
                .map(|(k, v)| {
                    let (lo, hi) = domain.interval(v);
                    let u = radical_inverse(i, PRIMES[k % PRIMES.len()]);
                    // decorrelate variables beyond the prime table
                    let u = (u + (k / PRIMES.len()) as f64 * 0.618_033_988_75).fract();
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

/// Decides whether `a` and `b` denote the same function on `domain`.
///
/// Constants are trimmed to two decimals first. The trees are equivalent when
/// their canonical keys match, or numerically: on [`EQUIV_POINTS`] Halton
/// points both must be finite at no fewer than half of them, agree within
/// `tol * (1 + |a|)` wherever both are finite, and disagree about finiteness
/// at no more than `m / 16` points (isolated removable singularities).
pub fn equivalent(a: &Expr, b: &Expr, domain: &Domain, tol: f64) -> bool {
    let ca = canonicalize(a);
    let cb = canonicalize(b);
    if ca.to_string() == cb.to_string() {
        return true;
    }
    let ta = canonicalize(&round_constants(&ca, 2));
    let tb = canonicalize(&round_constants(&cb, 2));
    if canonical_key(&ta) == canonical_key(&tb) {
        return true;
    }
    numerically_equal(&ca, &cb, domain, tol, EQUIV_POINTS)
        || numerically_equal(&ta, &tb, domain, tol, EQUIV_POINTS)
}

pub fn numerically_equal(a: &Expr, b: &Expr, domain: &Domain, tol: f64, m: usize) -> bool {
    let mut vars: Vec<String> = a.variables().into_iter().collect();
    for v in b.variables() {
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    vars.sort();
    let points = halton_points(&vars, domain, m);
    let mut finite = 0usize;
    let mut mismatched = 0usize;
    for p in &points {
        let lookup = |name: &str| vars.iter().position(|v| v == name).map(|i| p[i]);
        let (Ok(va), Ok(vb)) = (a.eval_scalar(&lookup), b.eval_scalar(&lookup)) else {
            return false;
        };
        match (va.is_finite(), vb.is_finite()) {
            (true, true) => {
                if (va - vb).abs() > tol * (1.0 + va.abs().max(vb.abs())) {
                    return false;
                }
                finite += 1;
            }
            (false, false) => {}
            _ => mismatched += 1,
        }
    }
    2 * finite >= m && mismatched <= m / 16
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::parse;

    fn eq(a: &str, b: &str) -> bool {
        equivalent(&parse(a).unwrap(), &parse(b).unwrap(), &Domain::default(), EQUIV_TOL)
    }

    #[test]
    fn algebraic_identity() {
        assert!(eq("x*x + x", "x*(x+1)"));
    }

    #[test]
    fn different_functions() {
        assert!(!eq("x^3 + x^2 + x", "x^3 + x^2"));
    }

    #[test]
    fn two_decimal_trim() {
        assert!(eq(
            "3.39*x^3 + 2.12*x^2 + 1.78*x",
            "3.390001*x^3 + 2.119998*x^2 + 1.780*x"
        ));
        assert!(!eq("3.39*x", "3.41*x"));
    }

    #[test]
    fn removable_singularity_is_tolerated() {
        assert!(eq("x1", "x0 / (x0 / x1)"));
    }

    #[test]
    fn finiteness_pattern_must_match() {
        // agree wherever both are defined, but log(x) is undefined on half the domain
        assert!(!eq("x", "exp(log(x))"));
        let pos = Domain::default().with("x", 0.1, 2.0);
        assert!(equivalent(
            &parse("x").unwrap(),
            &parse("exp(log(x))").unwrap(),
            &pos,
            EQUIV_TOL
        ));
    }

    #[test]
    fn halton_is_deterministic_and_in_bounds() {
        let vars = vec!["a".to_string(), "b".to_string()];
        let d = Domain::default().with("a", 2.0, 3.0);
        let p = halton_points(&vars, &d, 64);
        assert_eq!(p, halton_points(&vars, &d, 64));
        for row in &p {
            assert!((2.0..=3.0).contains(&row[0]));
            assert!((-1.0..=1.0).contains(&row[1]));
        }
    }
}
