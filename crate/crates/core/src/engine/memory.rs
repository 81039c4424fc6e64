use serde::Serialize;

use crate::expr::OperatorSet;

/// Value precision of the engine buffers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    Single,
}

impl Precision {
    pub fn bytes(self) -> u128 {
        match self {
            Precision::Double => 8,
            Precision::Single => 4,
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "double" | "f64" | "fp64" => Ok(Precision::Double),
            "single" | "f32" | "fp32" => Ok(Precision::Single),
            _ => Err(crate::Error::InvalidArgument(format!("unknown precision `{s}`"))),
        }
    }
}

/// Memory footprint of a network shape. All arithmetic saturates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MemoryEstimate {
    /// `ω_0 ..= ω_l`; the penultimate entry is the kept count when masked.
    pub per_layer_widths: Vec<u128>,
    /// Every layer fully materialised.
    pub full_bytes: u128,
    /// Largest single layer.
    pub peak_layer_bytes: u128,
    /// Intermediate layers materialised, final layer streamed in blocks.
    pub streamed_bytes: u128,
}

/// Widths `ω_0 ..= ω_l`, substituting `masked_penultimate` for `ω_{l-1}`.
pub fn layer_widths(
    ops: &OperatorSet,
    n_slots: usize,
    n_layers: usize,
    masked_penultimate: Option<u128>,
) -> Vec<u128> {
    let mut widths = vec![n_slots as u128];
    for layer in 0..n_layers {
        let mut w = *widths.last().expect("non-empty");
        if layer + 1 == n_layers {
            if let Some(kept) = masked_penultimate {
                w = kept;
                *widths.last_mut().expect("non-empty") = kept;
            }
        }
        widths.push(ops.layer_width(w));
    }
    widths
}

pub fn estimate_memory(
    ops: &OperatorSet,
    n_slots: usize,
    n_layers: usize,
    n_samples: usize,
    precision: Precision,
) -> MemoryEstimate {
    estimate_memory_with(ops, n_slots, n_layers, n_samples, precision, None, super::DEFAULT_BLOCK)
}

pub fn estimate_memory_with(
    ops: &OperatorSet,
    n_slots: usize,
    n_layers: usize,
    n_samples: usize,
    precision: Precision,
    masked_penultimate: Option<u128>,
    block: usize,
) -> MemoryEstimate {
    let widths = layer_widths(ops, n_slots, n_layers, masked_penultimate);
    let per_value = (n_samples as u128).saturating_mul(precision.bytes());
    let bytes = |w: u128| w.saturating_mul(per_value);
    let full = widths.iter().fold(0u128, |acc, &w| acc.saturating_add(bytes(w)));
    let peak = widths.iter().map(|&w| bytes(w)).max().unwrap_or(0);
    let (last, head) = widths.split_last().expect("non-empty");
    let streamed = head
        .iter()
        .fold(0u128, |acc, &w| acc.saturating_add(bytes(w)))
        .saturating_add(bytes((*last).min(block as u128)));
    MemoryEstimate { per_layer_widths: widths, full_bytes: full, peak_layer_bytes: peak, streamed_bytes: streamed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Op;

    #[test]
    fn arithmetic_two_layers() {
        let e = estimate_memory(&OperatorSet::arithmetic(), 2, 2, 10, Precision::Double);
        assert_eq!(e.per_layer_widths, vec![2, 16, 800]);
        assert_eq!(e.full_bytes, (2 + 16 + 800) * 10 * 8);
        assert_eq!(e.peak_layer_bytes, 800 * 80);
        assert_eq!(e.streamed_bytes, e.full_bytes);
    }

    #[test]
    fn koza_twenty_slots_exceeds_1e5_gb() {
        let e = estimate_memory(&OperatorSet::koza(), 20, 3, 1, Precision::Single);
        assert!(e.full_bytes > 100_000 * 1_000_000_000u128, "{}", e.full_bytes);
        assert!(e.streamed_bytes < e.full_bytes);
    }

    #[test]
    fn unary_only_is_constant_width() {
        let sin = OperatorSet::new("sin", vec![Op::Sin]).unwrap();
        let e = estimate_memory(&sin, 1, 4, 7, Precision::Single);
        assert_eq!(e.per_layer_widths, vec![1; 5]);
        assert_eq!(e.full_bytes, 5 * 7 * 4);
    }

    #[test]
    fn saturates_instead_of_overflowing() {
        let e = estimate_memory(&OperatorSet::koza(), 1000, 8, 1 << 30, Precision::Double);
        assert_eq!(e.full_bytes, u128::MAX);
    }

    #[test]
    fn mask_replaces_penultimate_width() {
        let w = layer_widths(&OperatorSet::arithmetic(), 2, 2, Some(10));
        assert_eq!(w, vec![2, 10, 1 * 10 + 2 * 100 + 2 * 55]);
    }
}
