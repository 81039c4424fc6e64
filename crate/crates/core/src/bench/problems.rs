use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{parse, Expr, OperatorSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SamplingKind {
    Uniform,
    Equidistant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplingSpec {
    pub kind: SamplingKind,
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

impl SamplingSpec {
    pub fn uniform(low: f64, high: f64, count: usize) -> Self {
        Self { kind: SamplingKind::Uniform, low, high, count }
    }

    pub fn equidistant(low: f64, high: f64, count: usize) -> Self {
        Self { kind: SamplingKind::Equidistant, low, high, count }
    }

    /// Parses `U(a,b,n)` or `E(a,b,n)`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad sampling spec `{s}`"));
        let s = s.trim();
        let kind = match s.chars().next() {
            Some('U') => SamplingKind::Uniform,
            Some('E') => SamplingKind::Equidistant,
            _ => return Err(bad()),
        };
        let inner = s[1..].trim().strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        let [lo, hi, n] = parts[..] else { return Err(bad()) };
        let spec = Self {
            kind,
            low: lo.parse().map_err(|_| bad())?,
            high: hi.parse().map_err(|_| bad())?,
            count: n.parse().map_err(|_| bad())?,
        };
        if !(spec.low < spec.high) || spec.count < 2 {
            return Err(bad());
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    ExactEquivalence,
    /// Equivalent up to an additive constant, coefficients loosely matched.
    StructureWithBias,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkProblem {
    pub name: String,
    pub ground_truth: Expr,
    /// Sampling per variable, in variable order.
    pub sampling: Vec<(String, SamplingSpec)>,
    pub ops: OperatorSet,
    pub allows_constants: bool,
    pub recovery_mode: RecoveryMode,
}

impl BenchmarkProblem {
    pub fn variables(&self) -> Vec<String> {
        self.sampling.iter().map(|(v, _)| v.clone()).collect()
    }
}

pub const PROBLEM_SETS: [&str; 6] = ["Nguyen", "Nguyen-c", "R", "Rstar", "Livermore", "Feynman"];

const NGUYEN: &[(&str, &str, &str, usize)] = &[
    ("Nguyen-1", "x1^3 + x1^2 + x1", "U(-1,1,20)", 1),
    ("Nguyen-2", "x1^4 + x1^3 + x1^2 + x1", "U(-1,1,20)", 1),
    ("Nguyen-3", "x1^5 + x1^4 + x1^3 + x1^2 + x1", "U(-1,1,20)", 1),
    ("Nguyen-4", "x1^6 + x1^5 + x1^4 + x1^3 + x1^2 + x1", "U(-1,1,20)", 1),
    ("Nguyen-5", "sin(x1^2)*cos(x1) - 1", "U(-1,1,20)", 1),
    ("Nguyen-6", "sin(x1) + sin(x1 + x1^2)", "U(-1,1,20)", 1),
    ("Nguyen-7", "log(x1 + 1) + log(x1^2 + 1)", "U(0,2,20)", 1),
    ("Nguyen-8", "sqrt(x1)", "U(0,4,20)", 1),
    ("Nguyen-9", "sin(x1) + sin(x2^2)", "U(0,1,20)", 2),
    ("Nguyen-10", "2*sin(x1)*cos(x2)", "U(0,1,20)", 2),
    // x1^x2 written with the set's own operators
    ("Nguyen-11", "exp(x2*log(x1))", "U(0,1,20)", 2),
    ("Nguyen-12", "x1^4 - x1^2 + 0.5*x2^2 - x2", "U(0,1,20)", 2),
];

const NGUYEN_C: &[(&str, &str, &str, usize)] = &[
    ("Nguyen-1c", "3.39*x1^3 + 2.12*x1^2 + 1.78*x1", "U(-1,1,20)", 1),
    ("Nguyen-2c", "0.48*x1^4 + 3.39*x1^3 + 2.12*x1^2 + 1.78*x1", "U(-1,1,20)", 1),
    ("Nguyen-5c", "sin(x1^2)*cos(x1) - 0.75", "U(0,2,20)", 1),
    ("Nguyen-8c", "sqrt(1.23*x1)", "U(0,4,20)", 1),
    ("Nguyen-9c", "sin(1.5*x1) + sin(0.5*x2^2)", "U(0,1,20)", 2),
    ("Nguyen-10c", "sin(1.5*x1)*cos(0.5*x2)", "U(0,1,20)", 2),
];

const R: &[(&str, &str, &str, usize)] = &[
    ("R-1", "(x1 + 1)^3/(x1^2 - x1 + 1)", "E(-1,1,20)", 1),
    ("R-2", "(x1^5 - 3*x1^3 + 1)/(x1^2 + 1)", "E(-1,1,20)", 1),
    ("R-3", "(x1^6 + x1^5)/(x1^4 + x1^3 + x1^2 + x1 + 1)", "E(-1,1,20)", 1),
];

const RSTAR: &[(&str, &str, &str, usize)] = &[
    ("R*-1", "(x1 + 1)^3/(x1^2 - x1 + 1)", "E(-10,10,20)", 1),
    ("R*-2", "(x1^5 - 3*x1^3 + 1)/(x1^2 + 1)", "E(-10,10,20)", 1),
    ("R*-3", "(x1^6 + x1^5)/(x1^4 + x1^3 + x1^2 + x1 + 1)", "E(-10,10,20)", 1),
];

const LIVERMORE: &[(&str, &str, &str, usize)] = &[
    ("Livermore-1", "1/3 + x1 + sin(x1^2)", "U(-10,10,1000)", 1),
    ("Livermore-2", "sin(x1^2)*cos(x1) - 2", "U(-1,1,20)", 1),
    ("Livermore-3", "sin(x1^3)*cos(x1^2) - 1", "U(-1,1,20)", 1),
    ("Livermore-4", "log(x1 + 1) + log(x1^2 + 1) + log(x1)", "U(0,2,20)", 1),
    ("Livermore-5", "x1^4 - x1^3 + x1^2 - x2", "U(0,1,20)", 2),
    ("Livermore-6", "4*x1^4 + 3*x1^3 + 2*x1^2 + x1", "U(-1,1,20)", 1),
    ("Livermore-7", "sinh(x1)", "U(-1,1,20)", 1),
    ("Livermore-8", "cosh(x1)", "U(-1,1,20)", 1),
    ("Livermore-9", "x1^9 + x1^8 + x1^7 + x1^6 + x1^5 + x1^4 + x1^3 + x1^2 + x1", "U(-1,1,20)", 1),
    ("Livermore-10", "6*sin(x1)*cos(x2)", "U(0,1,20)", 2),
    ("Livermore-11", "x1^4/(x1 + x2)", "U(-1,1,50)", 2),
    ("Livermore-12", "x1^5/x2^3", "U(-1,1,50)", 2),
    ("Livermore-13", "exp(log(x1)/3)", "U(0,4,20)", 1),
    ("Livermore-14", "x1^3 + x1^2 + x1 + sin(x1) + sin(x1^2)", "U(-1,1,20)", 1),
    ("Livermore-15", "exp(log(x1)/5)", "U(0,4,20)", 1),
    ("Livermore-16", "exp(2*log(x1)/5)", "U(0,4,20)", 1),
    ("Livermore-17", "4*sin(x1)*cos(x2)", "U(0,1,20)", 2),
    ("Livermore-18", "sin(x1^2)*cos(x1) - 5", "U(-1,1,20)", 1),
    ("Livermore-19", "x1^5 + x1^4 + x1^2 + x1", "U(-1,1,20)", 1),
    ("Livermore-20", "exp(-x1^2)", "U(-1,1,20)", 1),
    ("Livermore-21", "x1^8 + x1^7 + x1^6 + x1^5 + x1^4 + x1^3 + x1^2 + x1", "U(-1,1,20)", 1),
    ("Livermore-22", "exp(-0.5*x1^2)", "U(-1,1,20)", 1),
];

const FEYNMAN: &[(&str, &str, &str, usize)] = &[
    ("Feynman-1", "x1*x2", "U(1,5,20)", 2),
    ("Feynman-2", "x1/(2*(1 + x2))", "U(1,5,20)", 2),
    ("Feynman-3", "x1*x2^2", "U(1,5,20)", 2),
    ("Feynman-4", "1 + x1*x2/(1 - x1*x2/3)", "U(0,1,20)", 2),
    ("Feynman-5", "x1/x2", "U(1,5,20)", 2),
    ("Feynman-6", "0.5*x1*x2^2", "U(1,5,20)", 2),
    ("Feynman-7", "1.5*x1*x2", "U(1,5,20)", 2),
    ("Feynman-8", "x1/(exp(x4*x5/(x2*x3)) + exp(-(x4*x5/(x2*x3))))", "U(1,3,50)", 5),
    ("Feynman-9", "x1*x2*x3*log(x5/x4)", "U(1,5,50)", 5),
    ("Feynman-10", "x1*(x3 - x2)*x4/x5", "U(1,5,50)", 5),
    ("Feynman-11", "x1*x2/(x5*(x3^2 - x4^2))", "U(1,3,50)", 5),
    ("Feynman-12", "x1*x2^2*x3/(3*x4*x5)", "U(1,5,50)", 5),
    ("Feynman-13", "x1*(exp(x2*x3/(x4*x5)) - 1)", "U(1,5,50)", 5),
    ("Feynman-14", "x5*x1*x2*(1/x4 - 1/x3)", "U(1,5,50)", 5),
    ("Feynman-15", "x1*(x2 + x3*x4*sin(x5))", "U(1,5,50)", 5),
];

fn build(rows: &[(&str, &str, &str, usize)], allows_constants: bool) -> Result<Vec<BenchmarkProblem>> {
    rows.iter()
        .map(|&(name, truth, spec, n_vars)| {
            let spec = SamplingSpec::parse(spec)?;
            Ok(BenchmarkProblem {
                name: name.to_string(),
                ground_truth: parse(truth)?,
                sampling: (1..=n_vars).map(|i| (format!("x{i}"), spec)).collect(),
                ops: OperatorSet::koza(),
                allows_constants,
                recovery_mode: RecoveryMode::ExactEquivalence,
            })
        })
        .collect()
}

/// The embedded problem set `name` (case-insensitive; `R*` is accepted for
/// `Rstar`).
pub fn load_problem_set(name: &str) -> Result<Vec<BenchmarkProblem>> {
    match name.trim().to_ascii_lowercase().as_str() {
        "nguyen" => build(NGUYEN, false),
        "nguyen-c" | "nguyenc" => build(NGUYEN_C, true),
        "r" => build(R, false),
        "rstar" | "r*" => build(RSTAR, false),
        "livermore" => build(LIVERMORE, false),
        "feynman" => build(FEYNMAN, false),
        _ => Err(Error::UnknownProblemSet(name.to_string())),
    }
}

/// Looks a single problem up by name across all sets.
pub fn find_problem(name: &str) -> Result<BenchmarkProblem> {
    for set in PROBLEM_SETS {
        if let Some(p) = load_problem_set(set)?.into_iter().find(|p| p.name.eq_ignore_ascii_case(name)) {
            return Ok(p);
        }
    }
    Err(Error::UnknownProblemSet(name.to_string()))
}
