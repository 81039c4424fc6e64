use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a symbol layer enumerates an operator's inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorClass {
    /// One output per input column.
    Unary,
    /// One output per ordered pair `(i, j)`.
    BinarySquared,
    /// One output per pair `(i, j)` with `i <= j`.
    BinaryTriangled,
}

/// A scalar operator usable in expressions and symbol layers.
///
/// `SemiSub` and `SemiDiv` only exist at the layer level: they compute
/// `x_i - x_j` and `x_i / x_j` for `i <= j` and deduce to plain `Sub`/`Div`
/// expression nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    Identity,
    Neg,
    Inv,
    Sin,
    Cos,
    Exp,
    Log,
    Tanh,
    Cosh,
    Sinh,
    Abs,
    Sign,
    Sqrt,
    Pow2,
    Pow3,
    Add,
    Mul,
    Sub,
    Div,
    SemiSub,
    SemiDiv,
}

pub const ALL_OPS: [Op; 21] = [
    Op::Identity,
    Op::Neg,
    Op::Inv,
    Op::Sin,
    Op::Cos,
    Op::Exp,
    Op::Log,
    Op::Tanh,
    Op::Cosh,
    Op::Sinh,
    Op::Abs,
    Op::Sign,
    Op::Sqrt,
    Op::Pow2,
    Op::Pow3,
    Op::Add,
    Op::Mul,
    Op::Sub,
    Op::Div,
    Op::SemiSub,
    Op::SemiDiv,
];

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Identity => "identity",
            Op::Neg => "neg",
            Op::Inv => "inv",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Tanh => "tanh",
            Op::Cosh => "cosh",
            Op::Sinh => "sinh",
            Op::Abs => "abs",
            Op::Sign => "sign",
            Op::Sqrt => "sqrt",
            Op::Pow2 => "pow2",
            Op::Pow3 => "pow3",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Sub => "sub",
            Op::Div => "div",
            Op::SemiSub => "semisub",
            Op::SemiDiv => "semidiv",
        }
    }

    pub fn arity(self) -> usize {
        match self.class() {
            OperatorClass::Unary => 1,
            _ => 2,
        }
    }

    pub fn class(self) -> OperatorClass {
        match self {
            Op::Sub | Op::Div => OperatorClass::BinarySquared,
            Op::Add | Op::Mul | Op::SemiSub | Op::SemiDiv => OperatorClass::BinaryTriangled,
            _ => OperatorClass::Unary,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Op::Add | Op::Mul)
    }

    pub fn is_unary(self) -> bool {
        self.class() == OperatorClass::Unary
    }

    /// Infix symbol for binary expression operators.
    pub fn symbol(self) -> Option<&'static str> {
        match self {
            Op::Add => Some("+"),
            Op::Mul => Some("*"),
            Op::Sub | Op::SemiSub => Some("-"),
            Op::Div | Op::SemiDiv => Some("/"),
            _ => None,
        }
    }

    /// The operator an expression node built from this layer operator carries.
    pub fn expr_op(self) -> Op {
        match self {
            Op::SemiSub => Op::Sub,
            Op::SemiDiv => Op::Div,
            op => op,
        }
    }

    pub fn domain_note(self) -> Option<&'static str> {
        match self {
            Op::Log => Some("requires a positive argument"),
            Op::Sqrt => Some("requires a non-negative argument"),
            Op::Inv | Op::Div | Op::SemiDiv => Some("undefined at zero divisor"),
            _ => None,
        }
    }

    /// Complexity contribution of one node; identity only carries subtrees forward.
    pub fn complexity(self) -> usize {
        usize::from(self != Op::Identity)
    }

    #[inline]
    pub fn eval1(self, x: f64) -> f64 {
        match self {
            Op::Identity => x,
            Op::Neg => -x,
            Op::Inv => 1.0 / x,
            Op::Sin => x.sin(),
            Op::Cos => x.cos(),
            Op::Exp => x.exp(),
            Op::Log => x.ln(),
            Op::Tanh => x.tanh(),
            Op::Cosh => x.cosh(),
            Op::Sinh => x.sinh(),
            Op::Abs => x.abs(),
            Op::Sign => sign(x),
            Op::Sqrt => x.sqrt(),
            Op::Pow2 => x * x,
            Op::Pow3 => x * x * x,
            _ => f64::NAN,
        }
    }

    #[inline]
    pub fn eval2(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Mul => a * b,
            Op::Sub | Op::SemiSub => a - b,
            Op::Div | Op::SemiDiv => a / b,
            _ => f64::NAN,
        }
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        x
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let op = match lower.as_str() {
            "+" | "add" => Op::Add,
            "*" | "mul" => Op::Mul,
            "-" | "sub" => Op::Sub,
            "/" | "div" => Op::Div,
            "semisub" => Op::SemiSub,
            "semidiv" => Op::SemiDiv,
            other => ALL_OPS
                .iter()
                .copied()
                .find(|op| op.name() == other)
                .ok_or_else(|| Error::UnknownOperator(s.to_string()))?,
        };
        Ok(op)
    }
}

/// An ordered operator set. Symbol layers lay blocks out in class order
/// (unary, binary-squared, binary-triangled), keeping set order within a class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperatorSet {
    pub name: String,
    pub ops: Vec<Op>,
}

impl OperatorSet {
    pub fn new(name: impl Into<String>, ops: Vec<Op>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidArgument("operator set is empty".into()));
        }
        let mut seen = Vec::with_capacity(ops.len());
        for op in &ops {
            if seen.contains(op) {
                return Err(Error::InvalidArgument(format!("duplicate operator `{op}`")));
            }
            seen.push(*op);
        }
        Ok(Self { name: name.into(), ops })
    }

    pub fn koza() -> Self {
        use Op::*;
        Self::preset("Koza", vec![Add, Mul, Sub, Div, Identity, Sin, Cos, Exp, Log])
    }

    pub fn semi_koza() -> Self {
        use Op::*;
        Self::preset(
            "SemiKoza",
            vec![Add, Mul, SemiSub, SemiDiv, Identity, Neg, Inv, Sin, Cos, Exp, Log],
        )
    }

    pub fn arithmetic() -> Self {
        use Op::*;
        Self::preset("Arithmetic", vec![Add, Mul, Sub, Div, Identity])
    }

    pub fn basic_koza() -> Self {
        use Op::*;
        Self::preset("BasicKoza", vec![Add, Mul, Identity, Neg, Inv, Sin, Cos, Exp, Log])
    }

    /// The large set used for dynamical-system discovery.
    pub fn dynamics() -> Self {
        use Op::*;
        Self::preset(
            "Dynamics",
            vec![Add, Mul, Sub, Div, Identity, Sin, Cos, Exp, Log, Tanh, Cosh, Sign, Abs],
        )
    }

    fn preset(name: &str, ops: Vec<Op>) -> Self {
        Self { name: name.to_string(), ops }
    }

    pub fn presets() -> Vec<OperatorSet> {
        vec![Self::koza(), Self::semi_koza(), Self::arithmetic(), Self::basic_koza()]
    }

    /// Resolves a preset name (`Koza`, `SemiKoza`, `Arithmetic`, `BasicKoza`,
    /// `Dynamics`, case-insensitive, optional `O_` prefix) or a comma separated
    /// operator list such as `add,mul,identity,sin`.
    pub fn from_name(name: &str) -> Result<Self> {
        let trimmed = name.trim();
        let key = trimmed
            .strip_prefix("O_")
            .or_else(|| trimmed.strip_prefix("o_"))
            .unwrap_or(trimmed)
            .to_ascii_lowercase();
        match key.as_str() {
            "koza" => return Ok(Self::koza()),
            "semikoza" => return Ok(Self::semi_koza()),
            "arithmetic" => return Ok(Self::arithmetic()),
            "basickoza" => return Ok(Self::basic_koza()),
            "dynamics" => return Ok(Self::dynamics()),
            _ => {}
        }
        if !trimmed.contains(',') && trimmed.parse::<Op>().is_err() {
            return Err(Error::UnknownOperatorSet(name.to_string()));
        }
        let ops = trimmed
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Op>>>()?;
        Self::new(trimmed, ops)
    }

    pub fn unary(&self) -> impl Iterator<Item = Op> + '_ {
        self.of_class(OperatorClass::Unary)
    }

    pub fn binary_squared(&self) -> impl Iterator<Item = Op> + '_ {
        self.of_class(OperatorClass::BinarySquared)
    }

    pub fn binary_triangled(&self) -> impl Iterator<Item = Op> + '_ {
        self.of_class(OperatorClass::BinaryTriangled)
    }

    fn of_class(&self, class: OperatorClass) -> impl Iterator<Item = Op> + '_ {
        self.ops.iter().copied().filter(move |op| op.class() == class)
    }

    /// Operators in layer block order.
    pub fn layer_order(&self) -> Vec<Op> {
        self.unary()
            .chain(self.binary_squared())
            .chain(self.binary_triangled())
            .collect()
    }

    pub fn n_unary(&self) -> usize {
        self.unary().count()
    }

    pub fn n_squared(&self) -> usize {
        self.binary_squared().count()
    }

    pub fn n_triangled(&self) -> usize {
        self.binary_triangled().count()
    }

    pub fn kappa(&self) -> usize {
        self.ops.len()
    }

    pub fn contains(&self, op: Op) -> bool {
        self.ops.contains(&op)
    }

    /// Width of a layer applied to `width` inputs, saturating on overflow.
    pub fn layer_width(&self, width: u128) -> u128 {
        let sq = width.saturating_mul(width);
        let tri = width.saturating_mul(width.saturating_add(1)) / 2;
        (self.n_unary() as u128)
            .saturating_mul(width)
            .saturating_add((self.n_squared() as u128).saturating_mul(sq))
            .saturating_add((self.n_triangled() as u128).saturating_mul(tri))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_matches_arity() {
        for op in ALL_OPS {
            assert_eq!(op.class() == OperatorClass::Unary, op.arity() == 1, "{op}");
        }
    }

    #[test]
    fn triangled_ops_are_commutative_or_semi() {
        for op in ALL_OPS {
            if op.class() == OperatorClass::BinaryTriangled {
                assert!(op.is_commutative() || matches!(op, Op::SemiSub | Op::SemiDiv));
            }
        }
    }

    #[test]
    fn preset_members() {
        let names = |s: OperatorSet| s.ops.iter().map(|o| o.name()).collect::<Vec<_>>().join(",");
        assert_eq!(
            names(OperatorSet::koza()),
            "add,mul,sub,div,identity,sin,cos,exp,log"
        );
        assert_eq!(
            names(OperatorSet::semi_koza()),
            "add,mul,semisub,semidiv,identity,neg,inv,sin,cos,exp,log"
        );
        assert_eq!(names(OperatorSet::arithmetic()), "add,mul,sub,div,identity");
        assert_eq!(
            names(OperatorSet::basic_koza()),
            "add,mul,identity,neg,inv,sin,cos,exp,log"
        );
        for set in OperatorSet::presets() {
            assert!(set.kappa() > 0);
            assert_eq!(set.kappa(), set.n_unary() + set.n_squared() + set.n_triangled());
        }
    }

    #[test]
    fn eval_is_total() {
        assert!(Op::Log.eval1(-1.0).is_nan());
        assert_eq!(Op::Inv.eval1(0.0), f64::INFINITY);
        assert!(Op::Div.eval2(0.0, 0.0).is_nan());
        assert_eq!(Op::Sign.eval1(-3.0), -1.0);
        assert_eq!(Op::Sign.eval1(0.0), 0.0);
        assert_eq!(Op::SemiSub.eval2(1.0, 3.0), -2.0);
    }

    #[test]
    fn set_from_name() {
        assert_eq!(OperatorSet::from_name("O_Koza").unwrap(), OperatorSet::koza());
        assert_eq!(OperatorSet::from_name("basickoza").unwrap(), OperatorSet::basic_koza());
        let custom = OperatorSet::from_name("identity,add").unwrap();
        assert_eq!(custom.ops, vec![Op::Identity, Op::Add]);
        assert!(OperatorSet::from_name("nope").is_err());
        assert!(OperatorSet::from_name("add,add").is_err());
    }

    #[test]
    fn layer_order_groups_classes() {
        let order = OperatorSet::koza().layer_order();
        assert_eq!(
            order,
            vec![Op::Identity, Op::Sin, Op::Cos, Op::Exp, Op::Log, Op::Sub, Op::Div, Op::Add, Op::Mul]
        );
    }
}
