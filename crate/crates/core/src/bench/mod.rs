//! Benchmark problem sets, sampling, recovery checks and recovery-rate reports.

mod problems;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use problems::{
    find_problem, load_problem_set, BenchmarkProblem, RecoveryMode, SamplingKind, SamplingSpec, PROBLEM_SETS,
};

use crate::data::{dynamics_dataset, Dataset, OdeSystem};
use crate::engine::Psrn;
use crate::error::{Error, Result};
use crate::expr::{equivalent, halton_points, numerically_equal, Domain, Expr, OperatorSet, EQUIV_POINTS, EQUIV_TOL};
use crate::search::{run_search_with, ParetoFront, SearchConfig};

/// Relative tolerance used when recovering structure from noisy dynamics.
pub const STRUCTURE_TOL: f64 = 2e-2;

const MAX_RESAMPLE: usize = 10_000;

/// Draws a dataset for `problem`. Uniform rows whose target is not finite are
/// redrawn; equidistant ones are dropped.
pub fn sample_dataset(problem: &BenchmarkProblem, seed: u64) -> Result<Dataset> {
    let names = problem.variables();
    let count = problem.sampling.iter().map(|(_, s)| s.count).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(count); names.len()];
    let mut y = Vec::with_capacity(count);
    let eval = |row: &[f64]| {
        problem
            .ground_truth
            .eval_scalar(&|v: &str| names.iter().position(|n| n == v).map(|i| row[i]))
            .unwrap_or(f64::NAN)
    };
    let mut row = vec![0.0; names.len()];
    for r in 0..count {
        let mut attempts = 0;
        loop {
            for (i, (_, s)) in problem.sampling.iter().enumerate() {
                row[i] = match s.kind {
                    SamplingKind::Uniform => rng.gen_range(s.low..=s.high),
                    SamplingKind::Equidistant => s.low + (s.high - s.low) * r as f64 / (s.count - 1) as f64,
                };
            }
            let v = eval(&row);
            let equidistant = problem.sampling.iter().all(|(_, s)| s.kind == SamplingKind::Equidistant);
            if v.is_finite() || equidistant || attempts >= MAX_RESAMPLE {
                if v.is_finite() {
                    for (c, x) in cols.iter_mut().zip(&row) {
                        c.push(*x);
                    }
                    y.push(v);
                }
                break;
            }
            attempts += 1;
        }
    }
    Ok(Dataset::new(names, cols, y)?.with_note(format!("{} seed {seed}", problem.name)))
}

/// Sampling box of the problem as an equivalence domain.
pub fn problem_domain(problem: &BenchmarkProblem) -> Domain {
    problem.sampling.iter().fold(Domain::default(), |d, (v, s)| d.with(v, s.low, s.high))
}

/// Whether `candidate` recovers the problem's ground truth.
pub fn recovers(candidate: &Expr, problem: &BenchmarkProblem) -> bool {
    let domain = problem_domain(problem);
    let truth = &problem.ground_truth;
    match problem.recovery_mode {
        RecoveryMode::ExactEquivalence => equivalent(candidate, truth, &domain, EQUIV_TOL),
        RecoveryMode::StructureWithBias => {
            let diff = Expr::sub(candidate.clone(), truth.clone());
            let mut vars: Vec<String> = candidate.variables().into_iter().collect();
            vars.extend(truth.variables());
            vars.sort();
            vars.dedup();
            let values: Vec<f64> = halton_points(&vars, &domain, EQUIV_POINTS)
                .iter()
                .filter_map(|p| {
                    let v = diff.eval_scalar(&|n: &str| vars.iter().position(|x| x == n).map(|i| p[i])).ok()?;
                    v.is_finite().then_some(v)
                })
                .collect();
            if values.is_empty() {
                return false;
            }
            let bias = values.iter().sum::<f64>() / values.len() as f64;
            let shifted = Expr::sub(candidate.clone(), Expr::constant(bias));
            equivalent(&shifted, truth, &domain, EQUIV_TOL)
                || numerically_equal(&shifted, truth, &domain, STRUCTURE_TOL, EQUIV_POINTS)
        }
    }
}

pub fn check_recovery(front: &ParetoFront, problem: &BenchmarkProblem) -> bool {
    front.entries().iter().any(|e| recovers(&e.expr, problem))
}

/// A structure-with-bias problem for one state equation of a chaotic system;
/// the domain is the bounding box of `data`.
pub fn dynamics_problem(system: &OdeSystem, state: usize, data: &Dataset) -> BenchmarkProblem {
    let sampling = data
        .names
        .iter()
        .zip(&data.x)
        .map(|(n, c)| {
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (n.clone(), SamplingSpec::uniform(lo, hi, c.len()))
        })
        .collect();
    BenchmarkProblem {
        name: format!("{}-d{}", system.name, system.states[state]),
        ground_truth: system.equations()[state].clone(),
        sampling,
        ops: OperatorSet::dynamics(),
        allows_constants: true,
        recovery_mode: RecoveryMode::StructureWithBias,
    }
}

/// Simulated data and the matching problem for one state equation.
pub fn dynamics_trial(system: &OdeSystem, state: usize, n_points: usize, noise: f64, seed: u64) -> Result<(Dataset, BenchmarkProblem)> {
    let data = dynamics_dataset(system, state, n_points, noise, seed)?;
    let problem = dynamics_problem(system, state, &data);
    Ok((data, problem))
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub recovered: bool,
    pub seconds: f64,
    pub iterations: usize,
    pub best: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProblemReport {
    pub problem: String,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub mean_seconds: f64,
    pub median_seconds: f64,
    pub records: Vec<TrialRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub set: String,
    pub problems: Vec<ProblemReport>,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Wilson 95% interval for the aggregate rate.
    pub interval: (f64, f64),
}

/// Wilson score interval at 95% confidence.
pub fn binomial_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Search config for one trial: the problem's operators and constant setting, and the seed.
pub fn trial_config(problem: &BenchmarkProblem, base: &SearchConfig, seed: u64) -> SearchConfig {
    SearchConfig {
        ops: problem.ops.clone(),
        use_constants: base.use_constants || problem.allows_constants,
        seed,
        ..base.clone()
    }
}

/// Runs `trials` seeded searches (`seed0`, `seed0 + 1`, ...) per problem.
/// `progress` is called after each trial.
pub fn run_benchmark(
    set: &str,
    problems: &[BenchmarkProblem],
    trials: usize,
    seed0: u64,
    config: &SearchConfig,
    mut progress: impl FnMut(&BenchmarkProblem, &TrialRecord),
) -> Result<RecoveryReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    config.validate()?;
    let mut engines: HashMap<(OperatorSet, usize, usize), Psrn> = HashMap::new();
    let mut reports = Vec::with_capacity(problems.len());
    for problem in problems {
        let mut records = Vec::with_capacity(trials);
        for t in 0..trials {
            let seed = seed0 + t as u64;
            let cfg = trial_config(problem, config, seed);
            let key = (cfg.ops.clone(), cfg.n_slots, cfg.n_layers);
            if !engines.contains_key(&key) {
                engines.insert(key.clone(), cfg.build_engine()?);
            }
            let data = sample_dataset(problem, seed)?;
            let rep = run_search_with(&data, &cfg, &engines[&key])?;
            let recovered = check_recovery(&rep.front, problem);
            let rec = TrialRecord {
                seed,
                recovered,
                seconds: rep.wall_seconds,
                iterations: rep.iterations,
                best: rep.front.best().map(|e| e.expr.to_string()),
            };
            progress(problem, &rec);
            records.push(rec);
        }
        let successes = records.iter().filter(|r| r.recovered).count();
        let secs: Vec<f64> = records.iter().map(|r| r.seconds).collect();
        reports.push(ProblemReport {
            problem: problem.name.clone(),
            trials,
            successes,
            rate: successes as f64 / trials as f64,
            mean_seconds: secs.iter().sum::<f64>() / trials as f64,
            median_seconds: median(&secs),
            records,
        });
    }
    let total: usize = reports.iter().map(|r| r.trials).sum();
    let successes: usize = reports.iter().map(|r| r.successes).sum();
    Ok(RecoveryReport {
        set: set.to_string(),
        problems: reports,
        trials: total,
        successes,
        rate: if total == 0 { 0.0 } else { successes as f64 / total as f64 },
        interval: binomial_interval(successes, total),
    })
}

impl RecoveryReport {
    /// Report JSON with timing fields removed.
    pub fn deterministic_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        for p in v["problems"].as_array_mut().into_iter().flatten() {
            let o = p.as_object_mut().expect("object");
            o.remove("mean_seconds");
            o.remove("median_seconds");
            for r in o["records"].as_array_mut().into_iter().flatten() {
                r.as_object_mut().expect("object").remove("seconds");
            }
        }
        v
    }

    pub fn write_csv_to(&self, w: impl std::io::Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["problem", "trials", "successes", "rate", "mean_seconds"])?;
        for p in &self.problems {
            wr.write_record([
                p.problem.clone(),
                p.trials.to_string(),
                p.successes.to_string(),
                p.rate.to_string(),
                format!("{:.3}", p.mean_seconds),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        self.write_csv_to(fs::File::create(dir.join("report.csv"))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::search::{ParetoEntry, ParetoFront};

    fn front_of(exprs: &[&str]) -> ParetoFront {
        let mut f = ParetoFront::new();
        for (i, s) in exprs.iter().enumerate() {
            // distinct MSEs so nothing is dominated away by accident
            f.update(ParetoEntry::new(parse(s).unwrap(), 0.0, 1.0 - i as f64 * 1e-3));
        }
        f
    }

    #[test]
    fn equidistant_grid() {
        let p = find_problem("R-1").unwrap();
        let d = sample_dataset(&p, 0).unwrap();
        assert_eq!(d.n_rows(), 20);
        assert_eq!(d.x[0][0], -1.0);
        assert_eq!(d.x[0][19], 1.0);
        assert!((d.x[0][1] - d.x[0][0] - 2.0 / 19.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_rows_are_finite_and_seeded() {
        let p = find_problem("Nguyen-7").unwrap();
        let d = sample_dataset(&p, 3).unwrap();
        assert_eq!(d.n_rows(), 20);
        assert!(d.y.iter().all(|v| v.is_finite()));
        assert!(d.x[0].iter().all(|&x| (0.0..=2.0).contains(&x)));
        assert_eq!(d, sample_dataset(&p, 3).unwrap());
        assert_ne!(d, sample_dataset(&p, 4).unwrap());
        let l4 = find_problem("Livermore-4").unwrap();
        assert!(sample_dataset(&l4, 1).unwrap().y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn recovery_examples() {
        let n1 = find_problem("Nguyen-1").unwrap();
        assert!(check_recovery(&front_of(&["x1*x1*x1 + x1*x1 + x1"]), &n1));
        assert!(check_recovery(&front_of(&["x1*(x1*(x1 + 1) + 1)"]), &n1));
        assert!(!check_recovery(&front_of(&["x1*x1*x1 + x1*x1"]), &n1));
        let n1c = find_problem("Nguyen-1c").unwrap();
        assert!(check_recovery(&front_of(&["3.3912*x1^3 + 2.1204*x1^2 + 1.7797*x1"]), &n1c));
    }

    #[test]
    fn bias_mode() {
        let sys = OdeSystem::by_name("ShimizuMorioka").unwrap();
        let d = Dataset::new(
            sys.states.clone(),
            vec![vec![-1.5, 1.5], vec![-2.0, 2.0], vec![0.0, 2.0]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let p = dynamics_problem(&sys, 1, &d);
        assert!(recovers(&parse("x - 0.85*y - x*z + 0.003").unwrap(), &p));
        assert!(!recovers(&parse("x - 0.85*y + 0.003").unwrap(), &p));
        let exact = BenchmarkProblem { recovery_mode: RecoveryMode::ExactEquivalence, ..p };
        assert!(!recovers(&parse("x - 0.85*y - x*z + 0.3").unwrap(), &exact));
    }

    #[test]
    fn every_problem_recovers_itself() {
        for set in PROBLEM_SETS {
            for p in load_problem_set(set).unwrap() {
                let f = front_of(&[&p.ground_truth.to_string()]);
                assert!(check_recovery(&f, &p), "{}", p.name);
            }
        }
    }

    #[test]
    fn interval_contains_rate() {
        for n in 1..30 {
            for s in 0..=n {
                let (lo, hi) = binomial_interval(s, n);
                let r = s as f64 / n as f64;
                assert!(lo <= r && r <= hi && lo >= 0.0 && hi <= 1.0);
            }
        }
        let (lo, hi) = binomial_interval(8, 10);
        assert!((lo - 0.4902).abs() < 1e-3 && (hi - 0.9433).abs() < 1e-3);
    }

    #[test]
    fn tiny_benchmark() {
        let p = BenchmarkProblem {
            name: "sum".into(),
            ground_truth: parse("x1 + x2").unwrap(),
            sampling: vec![("x1".into(), SamplingSpec::uniform(-1.0, 1.0, 20)), ("x2".into(), SamplingSpec::uniform(-1.0, 1.0, 20))],
            ops: OperatorSet::arithmetic(),
            allows_constants: false,
            recovery_mode: RecoveryMode::ExactEquivalence,
        };
        let cfg = SearchConfig {
            ops: OperatorSet::arithmetic(),
            n_layers: 2,
            t_max: None,
            max_iters: Some(20),
            use_drmask: false,
            ..SearchConfig::default()
        };
        let rep = run_benchmark("tiny", &[p], 2, 0, &cfg, |_, _| {}).unwrap();
        assert_eq!(rep.rate, 1.0);
        assert_eq!(rep.successes, 2);
        let mut buf = Vec::new();
        rep.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("problem,trials,successes,rate,mean_seconds\nsum,2,2,1,"));
        assert!(run_benchmark("tiny", &[], 0, 0, &cfg, |_, _| {}).is_err());
    }
}
