use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::expr::{Op, OperatorClass, OperatorSet};

/// Storage type for subtree values.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + PartialOrd
    + Default
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const BYTES: usize;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    #[inline]
    fn apply1(op: Op, x: Self) -> Self {
        match op {
            Op::Identity => x,
            Op::Neg => -x,
            Op::Inv => Self::from_f64(1.0) / x,
            Op::Pow2 => x * x,
            Op::Pow3 => x * x * x,
            _ => Self::from_f64(op.eval1(x.to_f64())),
        }
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// One output column of a symbol layer: its operator and child columns in the
/// previous layer's output (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OffsetColumn {
    pub operator_index: usize,
    pub left_child: usize,
    pub right_child: Option<usize>,
}

/// Contiguous range of output columns produced by one operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpBlock {
    pub op: Op,
    pub start: usize,
    pub len: usize,
}

impl OpBlock {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// A layer applying every operator to every admissible input column (pair).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolLayer {
    ops: Vec<Op>,
    input_width: usize,
    output_width: usize,
    blocks: Vec<OpBlock>,
}

/// Start of row `i` in a row-major `i <= j` triangle of side `w`.
#[inline]
pub(crate) fn tri_row_start(i: usize, w: usize) -> usize {
    i * w - i * i.saturating_sub(1) / 2
}

/// Inverse of [`tri_row_start`]: `(i, j)` for local triangle index `t`.
pub(crate) fn tri_decode(t: usize, w: usize) -> (usize, usize) {
    // row i satisfies start(i) <= t < start(i + 1); solve the quadratic then fix up
    let wf = w as f64 + 0.5;
    let guess = (wf - (wf * wf - 2.0 * t as f64).max(0.0).sqrt()).floor();
    let mut i = (guess.max(0.0) as usize).min(w.saturating_sub(1));
    while i > 0 && tri_row_start(i, w) > t {
        i -= 1;
    }
    while i + 1 < w && tri_row_start(i + 1, w) <= t {
        i += 1;
    }
    (i, i + (t - tri_row_start(i, w)))
}

impl SymbolLayer {
    pub fn new(set: &OperatorSet, input_width: usize) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::InvalidArgument("layer input width must be positive".into()));
        }
        let ops = set.layer_order();
        let w = input_width as u128;
        let mut blocks = Vec::with_capacity(ops.len());
        let mut start: u128 = 0;
        for &op in &ops {
            let len = match op.class() {
                OperatorClass::Unary => w,
                OperatorClass::BinarySquared => w * w,
                OperatorClass::BinaryTriangled => w * (w + 1) / 2,
            };
            blocks.push((op, start, len));
            start += len;
        }
        if start > usize::MAX as u128 / 2 {
            return Err(Error::MemoryBudgetExceeded { estimate: start, budget: usize::MAX as u128 / 2 });
        }
        Ok(Self {
            ops,
            input_width,
            output_width: start as usize,
            blocks: blocks
                .into_iter()
                .map(|(op, s, l)| OpBlock { op, start: s as usize, len: l as usize })
                .collect(),
        })
    }

    /// Operators in block order.
    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn blocks(&self) -> &[OpBlock] {
        &self.blocks
    }

    fn block_of(&self, col: usize) -> Option<usize> {
        if col >= self.output_width {
            return None;
        }
        Some(self.blocks.partition_point(|b| b.end() <= col))
    }

    pub fn offset(&self, col: usize) -> Result<OffsetColumn> {
        let bi = self
            .block_of(col)
            .ok_or(Error::IndexOutOfRange { index: col, width: self.output_width })?;
        let block = self.blocks[bi];
        let local = col - block.start;
        let w = self.input_width;
        Ok(match block.op.class() {
            OperatorClass::Unary => OffsetColumn { operator_index: bi, left_child: local, right_child: None },
            OperatorClass::BinarySquared => OffsetColumn {
                operator_index: bi,
                left_child: local / w,
                right_child: Some(local % w),
            },
            OperatorClass::BinaryTriangled => {
                let (i, j) = tri_decode(local, w);
                OffsetColumn { operator_index: bi, left_child: i, right_child: Some(j) }
            }
        })
    }

    pub fn offsets(&self) -> impl Iterator<Item = OffsetColumn> + '_ {
        (0..self.output_width).map(move |c| self.offset(c).expect("in range"))
    }

    /// Materialises the layer: `input` is `n x input_width` row-major.
    pub fn evaluate<T: Scalar>(&self, input: &[T], n: usize) -> Vec<T> {
        let win = self.input_width;
        let wout = self.output_width;
        debug_assert_eq!(input.len(), n * win);
        let mut out = vec![T::default(); n * wout];
        for s in 0..n {
            let row = &input[s * win..(s + 1) * win];
            let dst = &mut out[s * wout..(s + 1) * wout];
            for block in &self.blocks {
                let seg = &mut dst[block.start..block.end()];
                match block.op.class() {
                    OperatorClass::Unary => {
                        for (d, &x) in seg.iter_mut().zip(row) {
                            *d = T::apply1(block.op, x);
                        }
                    }
                    OperatorClass::BinarySquared => {
                        for i in 0..win {
                            let a = row[i];
                            binary_row(block.op, a, row, &mut seg[i * win..(i + 1) * win]);
                        }
                    }
                    OperatorClass::BinaryTriangled => {
                        for i in 0..win {
                            let a = row[i];
                            let s0 = tri_row_start(i, win);
                            binary_row(block.op, a, &row[i..], &mut seg[s0..s0 + win - i]);
                        }
                    }
                }
            }
        }
        out
    }
}

#[inline]
fn binary_row<T: Scalar>(op: Op, a: T, bs: &[T], out: &mut [T]) {
    match op {
        Op::Add => out.iter_mut().zip(bs).for_each(|(o, &b)| *o = a + b),
        Op::Mul => out.iter_mut().zip(bs).for_each(|(o, &b)| *o = a * b),
        Op::Sub | Op::SemiSub => out.iter_mut().zip(bs).for_each(|(o, &b)| *o = a - b),
        Op::Div | Op::SemiDiv => out.iter_mut().zip(bs).for_each(|(o, &b)| *o = a / b),
        _ => unreachable!("{op} is not binary"),
    }
}

/// A contiguous run of final-layer columns sharing an operator and, for
/// binary operators, the left child.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Segment {
    Unary { op: Op, c0: usize, c1: usize, flat0: usize },
    Row { op: Op, i: usize, j0: usize, j1: usize, flat0: usize },
}

impl SymbolLayer {
    /// Visits the segments covering flat columns `[a, b)`.
    pub(crate) fn for_each_segment(&self, a: usize, b: usize, mut f: impl FnMut(Segment)) {
        let w = self.input_width;
        for block in &self.blocks {
            let lo = a.max(block.start);
            let hi = b.min(block.end());
            if lo >= hi {
                continue;
            }
            let (llo, lhi) = (lo - block.start, hi - block.start);
            match block.op.class() {
                OperatorClass::Unary => f(Segment::Unary { op: block.op, c0: llo, c1: lhi, flat0: lo }),
                OperatorClass::BinarySquared => {
                    for i in llo / w..=(lhi - 1) / w {
                        let j0 = llo.saturating_sub(i * w);
                        let j1 = (lhi - i * w).min(w);
                        f(Segment::Row { op: block.op, i, j0, j1, flat0: block.start + i * w + j0 });
                    }
                }
                OperatorClass::BinaryTriangled => {
                    let (mut i, _) = tri_decode(llo, w);
                    while i < w {
                        let rs = tri_row_start(i, w);
                        if rs >= lhi {
                            break;
                        }
                        let re = rs + (w - i);
                        let s = llo.max(rs);
                        let e = lhi.min(re);
                        if s < e {
                            f(Segment::Row {
                                op: block.op,
                                i,
                                j0: i + (s - rs),
                                j1: i + (e - rs),
                                flat0: block.start + s,
                            });
                        }
                        i += 1;
                    }
                }
            }
        }
    }
}
