use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use combsr::engine::Precision;
use combsr::expr::OperatorSet;
use combsr::search::{GeneratorKind, SearchConfig};

/// Flat run configuration. Every key is optional; flags override the file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub operators: Option<String>,
    pub slots: Option<usize>,
    pub layers: Option<usize>,
    pub top_k: Option<usize>,
    pub t_max: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub const_range: Option<[f64; 2]>,
    pub constants: Option<bool>,
    pub generator: Option<String>,
    pub down_sample: Option<usize>,
    pub drmask: Option<bool>,
    pub threads: Option<usize>,
    pub precision: Option<String>,
    pub eta: Option<f64>,
    pub warmup_iters: Option<usize>,
    pub stall_iters: Option<usize>,
    pub exact_mse_eps: Option<f64>,
    pub cache_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident: $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&text).map_err(anyhow::Error::from)
        };
        parsed.with_context(|| format!("invalid config {}", path.display()))
    }

    /// `self` with every key set in `other` replaced.
    pub fn overlay(mut self, other: &RunConfig) -> Self {
        overlay!(self, other: operators, slots, layers, top_k, t_max, max_iters, seed, const_range, constants,
            generator, down_sample, drmask, threads, precision, eta, warmup_iters, stall_iters, exact_mse_eps,
            cache_dir);
        self
    }

    pub fn ops(&self) -> anyhow::Result<OperatorSet> {
        Ok(OperatorSet::from_name(self.operators.as_deref().unwrap_or("Koza"))?)
    }

    pub fn precision(&self) -> anyhow::Result<Precision> {
        Ok(self.precision.as_deref().map(str::parse).transpose()?.unwrap_or_default())
    }

    /// Resolves against the library defaults. `default_constants` applies when
    /// the config says nothing about constants.
    pub fn search_config(&self, default_constants: bool) -> anyhow::Result<SearchConfig> {
        let d = SearchConfig::default();
        let generator: GeneratorKind = match &self.generator {
            Some(g) => g.parse()?,
            None => d.generator,
        };
        let const_range = self.const_range.map_or(d.const_range, |[lo, hi]| (lo, hi));
        let cfg = SearchConfig {
            ops: self.ops()?,
            n_slots: self.slots.unwrap_or(d.n_slots),
            n_layers: self.layers.unwrap_or(d.n_layers),
            top_k: self.top_k.unwrap_or(d.top_k),
            t_max: self.t_max.or(d.t_max),
            max_iters: self.max_iters.or(d.max_iters),
            down_sample: self.down_sample.unwrap_or(d.down_sample),
            const_range,
            use_constants: self.constants.unwrap_or(default_constants || self.const_range.is_some()),
            eta: self.eta.unwrap_or(d.eta),
            generator,
            seed: self.seed.unwrap_or(d.seed),
            warmup_iters: self.warmup_iters.unwrap_or(d.warmup_iters),
            stall_iters: self.stall_iters.unwrap_or(d.stall_iters),
            exact_mse_eps: self.exact_mse_eps.unwrap_or(d.exact_mse_eps),
            use_drmask: self.drmask.unwrap_or(d.use_drmask),
            precision: self.precision()?,
            cache_dir: self.cache_dir.clone().or_else(default_cache_dir),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_cache_dir() -> Option<PathBuf> {
    std::env::var_os("COMBSR_CACHE").map(PathBuf::from).or_else(|| Some(std::env::temp_dir().join("combsr-cache")))
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on|off, got `{s}`")),
    }
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    if !(lo < hi) {
        return Err("expected lo < hi".into());
    }
    Ok([lo, hi])
}

/// Flags shared by the search commands.
#[derive(Args, Clone, Debug, Default)]
pub struct SearchFlags {
    /// Operator set name (Koza, SemiKoza, Arithmetic, BasicKoza, Dynamics) or a comma list
    #[arg(long)]
    pub ops: Option<String>,
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub topk: Option<usize>,
    /// Time budget in seconds
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Constant sampling interval, e.g. `-3,3`
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub const_range: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_switch)]
    pub constants: Option<bool>,
    /// gp, mcts or random
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub downsample: Option<usize>,
    #[arg(long, value_parser = parse_switch)]
    pub drmask: Option<bool>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// f64 or f32
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long)]
    pub stall_iters: Option<usize>,
    /// Where DR masks are cached
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// TOML or JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SearchFlags {
    fn as_run_config(&self) -> RunConfig {
        RunConfig {
            operators: self.ops.clone(),
            slots: self.slots,
            layers: self.layers,
            top_k: self.topk,
            t_max: self.tmax,
            max_iters: self.max_iters,
            seed: self.seed,
            const_range: self.const_range,
            constants: self.constants,
            generator: self.generator.clone(),
            down_sample: self.downsample,
            drmask: self.drmask,
            threads: self.threads,
            precision: self.precision.clone(),
            stall_iters: self.stall_iters,
            cache_dir: self.cache_dir.clone(),
            ..RunConfig::default()
        }
    }

    /// The config file (if any) with these flags on top.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let merged = base.overlay(&self.as_run_config());
        if merged.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(merged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("slots = 3\nbogus = 1").is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"slots": 3, "bogus": 1}"#).is_err());
        let c: RunConfig = toml::from_str("slots = 4\nconst_range = [-1.0, 1.0]\ndrmask = false").unwrap();
        assert_eq!(c.slots, Some(4));
        assert_eq!(c.const_range, Some([-1.0, 1.0]));
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig { slots: Some(4), layers: Some(2), ..RunConfig::default() };
        let flags = RunConfig { slots: Some(5), ..RunConfig::default() };
        let m = file.overlay(&flags);
        assert_eq!((m.slots, m.layers), (Some(5), Some(2)));
    }

    #[test]
    fn file_plus_same_flags_equals_flags() {
        let flags = RunConfig { slots: Some(5), seed: Some(3), generator: Some("mcts".into()), ..RunConfig::default() };
        let file = flags.clone();
        assert_eq!(file.overlay(&flags), RunConfig::default().overlay(&flags));
        let a = RunConfig::default().overlay(&flags).search_config(false).unwrap();
        assert_eq!(a.n_slots, 5);
        assert_eq!(a.generator, GeneratorKind::Mcts);
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_range("-3,3"), Ok([-3.0, 3.0]));
        assert!(parse_range("3,-3").is_err());
        assert_eq!(parse_switch("off"), Ok(false));
        assert!(parse_switch("maybe").is_err());
    }
}
