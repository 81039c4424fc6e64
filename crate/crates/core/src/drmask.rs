//! Duplicate-removal mask over the penultimate layer.
//!
//! The penultimate expressions are enumerated over abstract, independent slot
//! variables. A column is dropped when an earlier column has the same
//! canonical key, or the same numeric fingerprint: values at fixed random
//! points that share the finiteness pattern and agree to `1e-9` relative.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::engine::{enumerate_all, EngineConfig, Psrn};
use crate::error::{Error, Result};
use crate::expr::{canonical_key, Expr, OperatorSet};

const MAGIC: &[u8; 4] = b"DRMK";
const FORMAT_VERSION: u32 = 1;
const FINGERPRINT_POINTS: usize = 64;
const FINGERPRINT_SEED: u64 = 0x5eed_d2a5;
const FINGERPRINT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DrMask {
    pub keep: Vec<bool>,
    pub kept_count: usize,
    /// Hex SHA-256 of the network shape.
    pub fingerprint: String,
}

/// Hash identifying `(ops, n_slots, n_layers)` and the dedup rules.
pub fn fingerprint(ops: &OperatorSet, n_slots: usize, n_layers: usize) -> String {
    let mut h = Sha256::new();
    let names: Vec<&str> = ops.ops.iter().map(|o| o.name()).collect();
    h.update(format!("drmask/v{FORMAT_VERSION}|{}|{n_slots}|{n_layers}", names.join(",")));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl DrMask {
    pub fn from_keep(keep: Vec<bool>, fingerprint: String) -> Self {
        let kept_count = keep.iter().filter(|&&k| k).count();
        Self { keep, kept_count, fingerprint }
    }

    /// Original indices of kept columns, ascending.
    pub fn kept_indices(&self) -> Vec<usize> {
        self.keep.iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect()
    }

    /// Original index to compacted index.
    pub fn remap_table(&self) -> BTreeMap<usize, usize> {
        self.kept_indices().into_iter().enumerate().map(|(new, old)| (old, new)).collect()
    }

    /// Kept columns in original order, with their original indices.
    pub fn apply<T: Clone>(&self, columns: &[T]) -> Result<(Vec<T>, Vec<usize>)> {
        if columns.len() != self.keep.len() {
            return Err(Error::LengthMismatch { expected: self.keep.len(), got: columns.len() });
        }
        let idx = self.kept_indices();
        Ok((idx.iter().map(|&i| columns[i].clone()).collect(), idx))
    }

    pub fn cache_path(dir: &Path, fingerprint: &str) -> PathBuf {
        dir.join(format!("drmask-{fingerprint}.bits"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 + 64 + 16 + self.keep.len() / 8 + 1);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(self.fingerprint.as_bytes());
        out.extend_from_slice(&(self.keep.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.kept_count as u64).to_le_bytes());
        for chunk in self.keep.chunks(8) {
            out.push(chunk.iter().enumerate().fold(0u8, |b, (i, &k)| b | ((k as u8) << i)));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("malformed mask file: {m}"));
        if bytes.len() < 88 || &bytes[..4] != MAGIC {
            return Err(bad("bad header"));
        }
        if u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        let fingerprint = std::str::from_utf8(&bytes[8..72]).map_err(|_| bad("fingerprint"))?.to_string();
        let width = u64::from_le_bytes(bytes[72..80].try_into().expect("8 bytes")) as usize;
        let kept = u64::from_le_bytes(bytes[80..88].try_into().expect("8 bytes")) as usize;
        let bits = &bytes[88..];
        if bits.len() != width.div_ceil(8) {
            return Err(bad("truncated"));
        }
        let keep: Vec<bool> = (0..width).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        let mask = Self::from_keep(keep, fingerprint);
        if mask.kept_count != kept {
            return Err(bad("kept count"));
        }
        Ok(mask)
    }
}

/// Computes the mask for the penultimate layer of an `n_layers` network.
pub fn compute_drmask(ops: &OperatorSet, n_slots: usize, n_layers: usize) -> Result<DrMask> {
    if n_slots == 0 || n_layers == 0 {
        return Err(Error::InvalidArgument("n_slots and n_layers must be at least 1".into()));
    }
    let fp = fingerprint(ops, n_slots, n_layers);
    if n_layers == 1 {
        // the slots themselves are independent variables
        return Ok(DrMask::from_keep(vec![true; n_slots], fp));
    }
    let slots: Vec<Expr> = (0..n_slots).map(|i| Expr::var(&format!("s{i}"))).collect();
    let exprs = enumerate_all(ops, &slots, n_layers - 1)?;
    let keys: Vec<String> = exprs.par_iter().map(canonical_key).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(FINGERPRINT_SEED);
    let points: Vec<Vec<f64>> = (0..n_slots)
        .map(|_| (0..FINGERPRINT_POINTS).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    let cfg = EngineConfig { block_size: usize::MAX, memory_budget: u128::MAX, ..EngineConfig::default() };
    let net = Psrn::with_mask(ops, n_slots, n_layers - 1, None, cfg)?;
    let values = net.evaluate_all(&points)?;

    let mut seen_keys: HashSet<&str> = HashSet::with_capacity(keys.len());
    let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut keep = vec![false; exprs.len()];
    for (i, key) in keys.iter().enumerate() {
        if !seen_keys.insert(key.as_str()) {
            continue;
        }
        let v = &values[i];
        let finite = v.iter().filter(|x| x.is_finite()).count();
        if 2 * finite < FINGERPRINT_POINTS {
            keep[i] = true;
            continue;
        }
        let bucket = buckets.entry(quantize(v)).or_default();
        if bucket.iter().any(|&j| same_values(v, &values[j])) {
            continue;
        }
        bucket.push(i);
        keep[i] = true;
    }
    Ok(DrMask::from_keep(keep, fp))
}

/// Bucket hash: finiteness pattern plus values rounded to ~7 significant
/// digits. Near-boundary values can land in different buckets, which only
/// costs a missed merge.
fn quantize(v: &[f64]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for &x in v {
        let q = if !x.is_finite() {
            i64::MIN
        } else if x == 0.0 {
            0
        } else {
            let e = x.abs().log10().floor();
            let m = (x / 10f64.powf(e - 6.0)).round() as i64;
            m.wrapping_mul(1000).wrapping_add(e as i64)
        };
        q.hash(&mut h);
    }
    h.finish()
}

fn same_values(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| match (x.is_finite(), y.is_finite()) {
        (true, true) => (x - y).abs() <= FINGERPRINT_TOL * (1.0 + x.abs().max(y.abs())),
        (false, false) => true,
        _ => false,
    })
}

/// Loads the mask from `cache_dir` when present and valid, otherwise
/// computes it and writes it there.
pub fn load_or_compute(
    ops: &OperatorSet,
    n_slots: usize,
    n_layers: usize,
    cache_dir: Option<&Path>,
) -> Result<DrMask> {
    let fp = fingerprint(ops, n_slots, n_layers);
    let Some(dir) = cache_dir else {
        return compute_drmask(ops, n_slots, n_layers);
    };
    let path = DrMask::cache_path(dir, &fp);
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(mask) = DrMask::from_bytes(&bytes) {
            if mask.fingerprint == fp {
                return Ok(mask);
            }
        }
    }
    let mask = compute_drmask(ops, n_slots, n_layers)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("bits.tmp");
    fs::File::create(&tmp)?.write_all(&mask.to_bytes())?;
    fs::rename(&tmp, &path)?;
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{equivalent, Domain, Op, EQUIV_TOL};

    #[test]
    fn identity_and_add_single_slot() {
        // penultimate outputs {x, x + x}
        let ops = OperatorSet::new("ia", vec![Op::Identity, Op::Add]).unwrap();
        let m = compute_drmask(&ops, 1, 2).unwrap();
        assert_eq!(m.keep, vec![true, true]);
    }

    #[test]
    fn duplicates_keep_first_occurrence() {
        let ops = OperatorSet::new("iam", vec![Op::Identity, Op::Add, Op::Mul]).unwrap();
        let m = compute_drmask(&ops, 2, 3).unwrap();
        let slots: Vec<Expr> = (0..2).map(|i| Expr::var(&format!("s{i}"))).collect();
        let exprs = enumerate_all(&ops, &slots, 2).unwrap();
        let mut seen = std::collections::HashSet::new();
        for (e, &k) in exprs.iter().zip(&m.keep) {
            let fresh = seen.insert(canonical_key(e));
            if !fresh {
                assert!(!k, "{e} duplicates an earlier key");
            }
        }
        assert!(m.kept_count < exprs.len());
    }

    #[test]
    fn removed_columns_have_kept_equivalents() {
        let ops = OperatorSet::koza();
        let m = compute_drmask(&ops, 2, 3).unwrap();
        let slots: Vec<Expr> = (0..2).map(|i| Expr::var(&format!("s{i}"))).collect();
        let exprs = enumerate_all(&ops, &slots, 2).unwrap();
        let kept: Vec<&Expr> = exprs.iter().zip(&m.keep).filter(|(_, &k)| k).map(|(e, _)| e).collect();
        // expressions defined on less than half of the box are checked where defined
        let domains = [Domain::new((-3.0, 3.0)), Domain::new((0.25, 2.75))];
        for (i, e) in exprs.iter().enumerate() {
            if !m.keep[i] {
                let key = canonical_key(e);
                assert!(
                    kept.iter().any(|k| canonical_key(k) == key || domains.iter().any(|d| equivalent(k, e, d, EQUIV_TOL))),
                    "{e} has no kept equivalent"
                );
            }
        }
    }

    #[test]
    fn apply_and_remap() {
        let m = DrMask::from_keep(vec![true, false, true], "x".into());
        let (cols, idx) = m.apply(&["a", "b", "c"]).unwrap();
        assert_eq!(cols, vec!["a", "c"]);
        assert_eq!(idx, vec![0, 2]);
        assert_eq!(m.remap_table(), BTreeMap::from([(0, 0), (2, 1)]));
        assert!(m.apply(&["a"]).is_err());
        let all = DrMask::from_keep(vec![true; 4], "x".into());
        assert_eq!(all.apply(&[1, 2, 3, 4]).unwrap().0, vec![1, 2, 3, 4]);
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ops = OperatorSet::arithmetic();
        let a = load_or_compute(&ops, 2, 2, Some(dir.path())).unwrap();
        let path = DrMask::cache_path(dir.path(), &a.fingerprint);
        assert!(path.exists());
        let b = load_or_compute(&ops, 2, 2, Some(dir.path())).unwrap();
        assert_eq!(a, b);
        assert_eq!(DrMask::from_bytes(&a.to_bytes()).unwrap(), a);
        // a corrupt file is recomputed
        fs::write(&path, b"junk").unwrap();
        assert_eq!(load_or_compute(&ops, 2, 2, Some(dir.path())).unwrap(), a);
    }

    #[test]
    fn mask_is_pure() {
        let ops = OperatorSet::koza();
        assert_eq!(compute_drmask(&ops, 2, 3).unwrap(), compute_drmask(&ops, 2, 3).unwrap());
        assert_ne!(fingerprint(&ops, 2, 3), fingerprint(&ops, 3, 3));
    }
}
