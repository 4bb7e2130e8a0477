//! Flat `key = value` experiment files. `#` starts a comment; lists are
//! comma separated.

use std::path::{Path, PathBuf};

use safe_transfer::datasets::{BenchmarkKind, BenchmarkOptions, Sizes};
use safe_transfer::kernels::KernelFamily;
use safe_transfer::safe_loop::{LoopConfig, Method};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkKind,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub sizes: Sizes,
    pub n_sources: usize,
    pub beta: f64,
    pub noisy_safe_set: bool,
    pub refit_every: usize,
    pub restarts: usize,
    pub refit_restarts: usize,
    pub kernel: KernelFamily,
    pub thresholds: Option<Vec<f64>>,
    pub max_attempts: usize,
    pub source_csv: Option<PathBuf>,
    pub target_csv: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

const KEYS: [&str; 21] = [
    "benchmark",
    "method",
    "methods",
    "seed",
    "seeds",
    "n_source",
    "n_init",
    "n_query",
    "n_pool",
    "n_sources",
    "beta",
    "noisy_safe_set",
    "refit_every",
    "restarts",
    "refit_restarts",
    "kernel",
    "thresholds",
    "max_attempts",
    "source_csv",
    "target_csv",
    "out",
];

fn list<T>(v: &str, line: usize, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| err(Some(line), format!("invalid value '{s}' for {key}"))))
        .collect()
}

fn scalar<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| err(Some(line), format!("invalid value '{v}' for {key}")))
}

fn positive(v: &str, line: usize, key: &str) -> Result<usize, ConfigError> {
    let n: usize = scalar(v, line, key)?;
    if n == 0 {
        return Err(err(Some(line), format!("{key} must be positive")));
    }
    Ok(n)
}

fn boolean(v: &str, line: usize, key: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(Some(line), format!("invalid value '{v}' for {key}; expected true or false"))),
    }
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(None, format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    // relative data paths are taken from the config's directory
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut cfg.source_csv, &mut cfg.target_csv].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| err(Some(line), format!("expected 'key = value', got '{body}'")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            return Err(err(Some(line), format!("unknown key '{k}'")));
        }
        if v.is_empty() {
            return Err(err(Some(line), format!("missing value for {k}")));
        }
        if let Some((prev, _, _)) = entries.iter().find(|(_, pk, _)| *pk == k) {
            return Err(err(Some(line), format!("duplicate key '{k}' (first set on line {prev})")));
        }
        entries.push((line, k, v));
    }
    let get = |k: &str| entries.iter().find(|(_, key, _)| key == k).map(|(l, _, v)| (*l, v.as_str()));

    let (bl, bv) = get("benchmark").ok_or_else(|| err(None, "missing required key 'benchmark'"))?;
    let benchmark = BenchmarkKind::parse(bv).ok_or_else(|| {
        let names: Vec<&str> = BenchmarkKind::ALL.iter().map(|k| k.name()).collect();
        err(Some(bl), format!("unknown benchmark '{bv}'; expected one of {}", names.join(", ")))
    })?;

    let methods = match (get("method"), get("methods")) {
        (Some(_), Some((l, _))) => return Err(err(Some(l), "set either 'method' or 'methods', not both")),
        (Some((l, v)), None) | (None, Some((l, v))) => {
            let m = list(v, l, "method", Method::parse)?;
            if m.is_empty() {
                return Err(err(Some(l), "no method given"));
            }
            if let Some(bad) = m.iter().find(|m| **m == Method::EffLmc) {
                return Err(err(
                    Some(l),
                    format!(
                        "unsupported combination: {} with {}; source precomputation needs the hierarchical kernel",
                        benchmark.name(),
                        bad.name()
                    ),
                ));
            }
            m
        }
        (None, None) => return Err(err(None, "missing required key 'method'")),
    };

    let seeds = match (get("seed"), get("seeds")) {
        (Some(_), Some((l, _))) => return Err(err(Some(l), "set either 'seed' or 'seeds', not both")),
        (Some((l, v)), None) | (None, Some((l, v))) => {
            let s = list(v, l, "seed", |s| s.parse::<u64>().ok())?;
            if s.is_empty() {
                return Err(err(Some(l), "no seed given"));
            }
            s
        }
        (None, None) => return Err(err(None, "missing required key 'seed'")),
    };

    let mut sizes = Sizes::defaults(benchmark);
    for (key, slot) in [
        ("n_source", &mut sizes.n_source),
        ("n_init", &mut sizes.n_init),
        ("n_query", &mut sizes.n_query),
        ("n_pool", &mut sizes.n_pool),
    ] {
        if let Some((l, v)) = get(key) {
            *slot = positive(v, l, key)?;
        }
    }
    let count = |key: &str, default: usize| get(key).map_or(Ok(default), |(l, v)| positive(v, l, key));

    let beta = match get("beta") {
        Some((l, v)) => {
            let b: f64 = scalar(v, l, "beta")?;
            if !(b > 0.0 && b.is_finite()) {
                return Err(err(Some(l), format!("beta must be positive and finite, got {v}")));
            }
            b
        }
        None => 4.0,
    };
    let noisy_safe_set = get("noisy_safe_set").map_or(Ok(true), |(l, v)| boolean(v, l, "noisy_safe_set"))?;
    let kernel = match get("kernel") {
        Some((l, v)) => KernelFamily::parse(v).ok_or_else(|| err(Some(l), format!("unknown kernel '{v}'")))?,
        None => KernelFamily::Matern52,
    };
    let thresholds = match get("thresholds") {
        Some((l, v)) => {
            let t = list(v, l, "thresholds", |s| s.parse::<f64>().ok().filter(|x| x.is_finite()))?;
            if t.is_empty() {
                return Err(err(Some(l), "no threshold given"));
            }
            Some(t)
        }
        None => None,
    };
    let path = |k: &str| get(k).map(|(_, v)| PathBuf::from(v));
    let defaults = LoopConfig::default();
    let cfg = ExperimentConfig {
        benchmark,
        methods,
        seeds,
        sizes,
        n_sources: count("n_sources", 1)?,
        beta,
        noisy_safe_set,
        refit_every: count("refit_every", 1)?,
        restarts: count("restarts", defaults.fit.restarts)?,
        refit_restarts: count("refit_restarts", defaults.refit_restarts)?,
        kernel,
        thresholds,
        max_attempts: count("max_attempts", 1000)?,
        source_csv: path("source_csv"),
        target_csv: path("target_csv"),
        out: path("out").unwrap_or_else(|| PathBuf::from("results")),
    };
    if benchmark == BenchmarkKind::CustomCsv {
        if cfg.source_csv.is_none() || cfg.target_csv.is_none() {
            return Err(err(None, "custom-csv needs both 'source_csv' and 'target_csv'"));
        }
    } else if let Some((l, _)) = get("source_csv").or(get("target_csv")) {
        return Err(err(Some(l), format!("data files are only read by custom-csv, not {}", benchmark.name())));
    }
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn benchmark_options(&self, seed: u64) -> BenchmarkOptions {
        BenchmarkOptions {
            kind: self.benchmark,
            seed,
            sizes: self.sizes,
            n_sources: self.n_sources,
            max_attempts: self.max_attempts,
            thresholds: self.thresholds.clone(),
            source_csv: self.source_csv.clone(),
            target_csv: self.target_csv.clone(),
        }
    }

    pub fn loop_config(&self, method: Method, seed: u64) -> LoopConfig {
        let mut c = LoopConfig {
            method,
            n_query: self.sizes.n_query,
            beta: self.beta,
            noisy_safe_set: self.noisy_safe_set,
            refit_every: self.refit_every,
            family: self.kernel,
            refit_restarts: self.refit_restarts,
            seed,
            ..LoopConfig::default()
        };
        c.fit.restarts = self.restarts;
        c
    }
}
