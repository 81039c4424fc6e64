mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use combsr::bench::{load_problem_set, run_benchmark, RecoveryReport};
use combsr::data::ingest_csv;
use combsr::engine::{enumerate_all, estimate_memory_with, EngineConfig, Precision, Psrn, DEFAULT_BLOCK};
use combsr::expr::{Columns, OperatorSet};
use combsr::search::{run_search, ParetoFront, RunReport};

use config::SearchFlags;

#[derive(Parser)]
#[command(name = "combsr", version, about = "Symbolic regression by exhaustive shared-subtree evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for expressions fitting a CSV dataset (last column is the target)
    Fit {
        csv: PathBuf,
        #[command(flatten)]
        flags: SearchFlags,
        /// Output directory for front.json
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a benchmark problem set over several seeds
    Bench {
        /// Nguyen, Nguyen-c, R, Rstar, Livermore or Feynman
        set: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Restrict to these problems (comma separated names)
        #[arg(long, value_delimiter = ',')]
        problems: Vec<String>,
        #[command(flatten)]
        flags: SearchFlags,
        /// Output directory for report.json and report.csv
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Score every expression of a network shape against a synthetic target
    Enumerate {
        #[arg(long, default_value = "Koza")]
        ops: String,
        #[arg(long, default_value_t = 2)]
        slots: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = Mode::Engine)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Estimate the memory footprint of a network shape
    EstimateMem {
        #[arg(long, default_value = "Koza")]
        ops: String,
        #[arg(long)]
        slots: usize,
        #[arg(long)]
        layers: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value = "f64")]
        precision: String,
        /// Final-layer columns per streamed block
        #[arg(long, default_value_t = DEFAULT_BLOCK)]
        block: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Engine,
    Naive,
    /// Run both and compare
    Both,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn runtime<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit { csv, flags, out } => cmd_fit(&csv, &flags, &out),
        Command::Bench { set, trials, problems, flags, out } => cmd_bench(&set, trials, &problems, &flags, &out),
        Command::Enumerate { ops, slots, layers, samples, mode, seed, threads } => {
            cmd_enumerate(&ops, slots, layers, samples, mode, seed, threads)
        }
        Command::EstimateMem { ops, slots, layers, samples, precision, block } => {
            cmd_estimate_mem(&ops, slots, layers, samples, &precision, block)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), Failure> {
    match threads {
        Some(0) => Err(Failure::Usage(anyhow!("threads must be at least 1"))),
        Some(n) => runtime(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(anyhow::Error::from),
        ),
        None => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_front(front: &ParetoFront) {
    println!("{:>10}  {:>12}  {:>8}  expression", "complexity", "mse", "reward");
    for e in front.entries() {
        println!("{:>10}  {:>12.4e}  {:>8.4}  {}", e.complexity, e.mse, e.reward, e.expr);
    }
}

fn cmd_fit(csv: &Path, flags: &SearchFlags, out: &Path) -> Result<(), Failure> {
    let run = usage(flags.resolve())?;
    let cfg = usage(run.search_config(true))?;
    set_threads(run.threads)?;
    let data = runtime(ingest_csv(csv).with_context(|| format!("reading {}", csv.display())))?;
    let report: RunReport = runtime(run_search(&data, &cfg).map_err(anyhow::Error::from))?;
    runtime(write_json(&out.join("front.json"), &report))?;
    print_front(&report.front);
    eprintln!(
        "{} iterations, {:.2} s, stopped: {:?}",
        report.iterations, report.wall_seconds, report.stop_reason
    );
    Ok(())
}

fn cmd_bench(set: &str, trials: usize, only: &[String], flags: &SearchFlags, out: &Path) -> Result<(), Failure> {
    let run = usage(flags.resolve())?;
    let cfg = usage(run.search_config(false))?;
    if trials == 0 {
        return Err(Failure::Usage(anyhow!("trials must be at least 1")));
    }
    let mut problems = usage(load_problem_set(set).map_err(anyhow::Error::from))?;
    if !only.is_empty() {
        for name in only {
            if !problems.iter().any(|p| p.name.eq_ignore_ascii_case(name)) {
                return Err(Failure::Usage(anyhow!("no problem `{name}` in set {set}")));
            }
        }
        problems.retain(|p| only.iter().any(|n| p.name.eq_ignore_ascii_case(n)));
    }
    if run.operators.is_some() {
        for p in &mut problems {
            p.ops = cfg.ops.clone();
        }
    }
    set_threads(run.threads)?;
    let report: RecoveryReport = runtime(
        run_benchmark(set, &problems, trials, cfg.seed, &cfg, |p, r| {
            eprintln!("{} seed {}: {} in {:.2} s", p.name, r.seed, if r.recovered { "recovered" } else { "missed" }, r.seconds);
        })
        .map_err(anyhow::Error::from),
    )?;
    runtime(report.write(out).map_err(anyhow::Error::from))?;
    println!("{:<14} {:>6} {:>9} {:>6} {:>12}", "problem", "trials", "successes", "rate", "mean_seconds");
    for p in &report.problems {
        println!("{:<14} {:>6} {:>9} {:>6.2} {:>12.2}", p.problem, p.trials, p.successes, p.rate, p.mean_seconds);
    }
    println!(
        "overall {}/{} = {:.3} (95% interval {:.3}..{:.3})",
        report.successes, report.trials, report.rate, report.interval.0, report.interval.1
    );
    Ok(())
}

#[derive(Serialize)]
struct ModeResult {
    mode: Mode,
    count: usize,
    seconds: f64,
    evals_per_second: f64,
    top1_index: usize,
    top1: String,
    top1_mse: f64,
}

fn cmd_enumerate(
    ops: &str,
    slots: usize,
    layers: usize,
    samples: usize,
    mode: Mode,
    seed: u64,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let ops = usage(OperatorSet::from_name(ops).map_err(anyhow::Error::from))?;
    if slots == 0 || layers == 0 || samples == 0 {
        return Err(Failure::Usage(anyhow!("slots, layers and samples must be at least 1")));
    }
    set_threads(threads)?;
    let config = EngineConfig { samples_hint: samples, memory_budget: u128::MAX, ..EngineConfig::default() };
    let engine = runtime(Psrn::with_mask(&ops, slots, layers, None, config).map_err(anyhow::Error::from))?;
    let symbols = engine.slot_symbols();
    let names: Vec<String> = symbols.iter().map(|s| s.to_string()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..slots).map(|_| (0..samples).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut cols = Columns::new(samples);
    for (n, c) in names.iter().zip(&inputs) {
        cols.push(n, c);
    }
    let target_index = rng.gen_range(0..engine.final_width());
    let target = runtime(engine.deduce(target_index, &symbols).map_err(anyhow::Error::from))?;
    let y = runtime(target.evaluate(&cols).map_err(anyhow::Error::from))?;

    let run_engine = || -> anyhow::Result<ModeResult> {
        let t = Instant::now();
        let out = engine.forward(&inputs, &y, 1, &symbols)?;
        let seconds = t.elapsed().as_secs_f64();
        let top = out.entries.first().ok_or_else(|| anyhow!("no finite candidate"))?;
        Ok(ModeResult {
            mode: Mode::Engine,
            count: engine.final_width(),
            seconds,
            evals_per_second: engine.final_width() as f64 / seconds,
            top1_index: top.flat_index,
            top1: top.expr.to_string(),
            top1_mse: top.mse,
        })
    };
    let run_naive = || -> anyhow::Result<ModeResult> {
        let exprs = enumerate_all(&ops, &symbols, layers)?;
        let t = Instant::now();
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, e) in exprs.iter().enumerate() {
            let v = e.evaluate(&cols)?;
            let s: f64 = v.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum();
            let mse = s / samples as f64;
            let mse = if mse.is_finite() { mse } else { f64::INFINITY };
            if mse < best.0 {
                best = (mse, i);
            }
        }
        let seconds = t.elapsed().as_secs_f64();
        let (mse, idx) = best;
        if idx == usize::MAX {
            return Err(anyhow!("no finite candidate"));
        }
        Ok(ModeResult {
            mode: Mode::Naive,
            count: exprs.len(),
            seconds,
            evals_per_second: exprs.len() as f64 / seconds,
            top1_index: idx,
            top1: exprs[idx].to_string(),
            top1_mse: mse,
        })
    };

    let head = json!({
        "ops": ops.name,
        "slots": slots,
        "layers": layers,
        "samples": samples,
        "seed": seed,
        "target": target.to_string(),
    });
    let mut value = head;
    match mode {
        Mode::Engine => value["engine"] = runtime(run_engine().and_then(|r| Ok(serde_json::to_value(r)?)))?,
        Mode::Naive => value["naive"] = runtime(run_naive().and_then(|r| Ok(serde_json::to_value(r)?)))?,
        Mode::Both => {
            let e = runtime(run_engine())?;
            let n = runtime(run_naive())?;
            value["agree"] = json!(e.top1_index == n.top1_index && e.top1_mse == n.top1_mse);
            value["speedup"] = json!(n.seconds / e.seconds);
            value["engine"] = runtime(serde_json::to_value(e).map_err(anyhow::Error::from))?;
            value["naive"] = runtime(serde_json::to_value(n).map_err(anyhow::Error::from))?;
        }
    }
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    Ok(())
}

fn cmd_estimate_mem(
    ops: &str,
    slots: usize,
    layers: usize,
    samples: usize,
    precision: &str,
    block: usize,
) -> Result<(), Failure> {
    let ops = usage(OperatorSet::from_name(ops).map_err(anyhow::Error::from))?;
    let precision: Precision = usage(precision.parse().map_err(anyhow::Error::from))?;
    if slots == 0 || layers == 0 || block == 0 {
        return Err(Failure::Usage(anyhow!("slots, layers and block must be at least 1")));
    }
    let est = estimate_memory_with(&ops, slots, layers, samples, precision, None, block);
    let gb = |b: u128| b as f64 / 1e9;
    let value = json!({
        "ops": ops.name,
        "slots": slots,
        "layers": layers,
        "samples": samples,
        "precision": precision,
        "block": block,
        "per_layer_widths": est.per_layer_widths.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        "per_layer_bytes": est.per_layer_widths.iter()
            .map(|w| w.saturating_mul(samples as u128).saturating_mul(precision.bytes()).to_string())
            .collect::<Vec<_>>(),
        "full_bytes": est.full_bytes.to_string(),
        "streamed_bytes": est.streamed_bytes.to_string(),
        "full_gb": gb(est.full_bytes),
        "streamed_gb": gb(est.streamed_bytes),
    });
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    Ok(())
}
