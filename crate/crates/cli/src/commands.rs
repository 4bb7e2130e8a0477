use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use safe_transfer::datasets::csv_io::{write_datasets, write_grids};
use safe_transfer::datasets::{build_benchmark, Benchmark};
use safe_transfer::kernels::{KernelFamily, TaskTag};
use safe_transfer::safe_loop::{run, ExperimentTrace, TraceStatus};
use safe_transfer::theory::{feasibility_failure, exploration};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::summary::{aggregate, read_summary, render_csv, render_table, write_summary, SummaryRow};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn trace_header(dim: usize, n_safety: usize) -> Vec<String> {
    let mut h = vec!["iter".to_string(), "query_index".to_string()];
    h.extend((1..=dim).map(|i| format!("x{i}")));
    h.push("y".into());
    h.extend((1..=n_safety).map(|j| format!("z{j}")));
    for c in ["safe_truth", "safe_set_size", "rmse", "tp_rate", "fp_rate", "region_label", "fit_seconds", "status"] {
        h.push(c.into());
    }
    h
}

/// One row per query; the last row carries the terminal status, earlier
/// rows `ok`.
pub fn write_trace_csv<W: Write>(w: W, trace: &ExperimentTrace, dim: usize, n_safety: usize) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    wr.write_record(trace_header(dim, n_safety)).map_err(io)?;
    let n = trace.records.len();
    for (k, r) in trace.records.iter().enumerate() {
        let mut rec = vec![r.iteration.to_string(), r.query_index.to_string()];
        rec.extend(r.x.iter().map(f64::to_string));
        rec.push(r.y.to_string());
        rec.extend(r.z.iter().map(f64::to_string));
        rec.push(r.safe_truth.to_string());
        rec.push(r.safe_set_size.to_string());
        rec.push(r.rmse.to_string());
        rec.push(r.tp_rate.to_string());
        rec.push(r.fp_rate.to_string());
        rec.push(fmt_opt(r.region_label));
        rec.push(format!("{:.6}", r.fit_seconds));
        rec.push(if k + 1 == n { trace.status.label().to_string() } else { "ok".to_string() });
        wr.write_record(&rec).map_err(io)?;
    }
    wr.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn trace_file_name(cfg: &ExperimentConfig, method: &str, seed: u64) -> String {
    format!("{}_{}_seed{}.csv", cfg.benchmark.name(), method, seed)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub rows: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

/// Runs every seed and method, writing one iteration file per run and a
/// `summary.csv`. A fit failure is an error unless `keep_going`.
pub fn cmd_run(cfg: &ExperimentConfig, keep_going: bool, log: &mut dyn Write) -> Result<RunOutcome, CliError> {
    ensure_dir(&cfg.out)?;
    let mut out = RunOutcome { rows: Vec::new(), files: Vec::new(), failures: Vec::new() };
    for &seed in &cfg.seeds {
        let bench = build_benchmark(&cfg.benchmark_options(seed))?;
        for &method in &cfg.methods {
            let trace = run(&bench, &cfg.loop_config(method, seed))?;
            let path = cfg.out.join(trace_file_name(cfg, method.name(), seed));
            write_trace_csv(create(&path)?, &trace, bench.dim(), bench.n_safety())?;
            let row = SummaryRow::from_trace(cfg.benchmark.name(), &trace, bench.regions.is_some());
            writeln!(
                log,
                "{} {} seed {}: {} queries, {}, safe ratio {}, regions {}, final rmse {}",
                row.benchmark,
                row.method,
                seed,
                row.n_queries,
                row.status,
                fmt_opt(row.safe_query_ratio.map(|v| format!("{v:.3}"))),
                fmt_opt(row.explored_regions),
                fmt_opt(row.final_rmse.map(|v| format!("{v:.4}"))),
            )
            .ok();
            out.files.push(path);
            out.rows.push(row);
            if let TraceStatus::FitFailed(msg) = &trace.status {
                let m = format!("{} seed {seed}: {msg}", method.name());
                if !keep_going {
                    write_summary(create(&cfg.out.join("summary.csv"))?, &out.rows).map_err(|e| CliError::Runtime(e.to_string()))?;
                    return Err(CliError::Runtime(m));
                }
                out.failures.push(m);
            }
        }
    }
    write_summary(create(&cfg.out.join("summary.csv"))?, &out.rows).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(out)
}

/// Writes `source.csv`, `target_initial.csv`, `grid.csv` (lattice
/// benchmarks) and `metadata.json` for one seed.
pub fn cmd_gen_data(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(out)?;
    let b: Benchmark = build_benchmark(&cfg.benchmark_options(seed))?;
    let mut files = Vec::new();
    if b.sources.iter().any(|s| !s.is_empty()) {
        let sets: Vec<(TaskTag, _)> = b.sources.iter().enumerate().map(|(p, s)| (TaskTag::Source(p + 1), s)).collect();
        let path = out.join("source.csv");
        write_datasets(create(&path)?, &sets)?;
        files.push(path);
    }
    let path = out.join("target_initial.csv");
    write_datasets(create(&path)?, &[(TaskTag::Target, &b.initial)])?;
    files.push(path);
    if !b.grids.is_empty() {
        let p = b.grids.len() - 1;
        let tagged: Vec<(TaskTag, _)> = b.grids.iter().enumerate().map(|(i, g)| (TaskTag::from_index(i, p), g)).collect();
        let path = out.join("grid.csv");
        write_grids(create(&path)?, &tagged)?;
        files.push(path);
    }
    let path = out.join("metadata.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &b.metadata).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Runtime(e.to_string()))?;
    files.push(path);
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub n: usize,
    pub sigma: f64,
    pub k_scale: f64,
    pub threshold: f64,
    pub beta: f64,
    pub kernel: KernelFamily,
    pub lengthscale: f64,
}

pub fn cmd_theory_bound(q: &BoundQuery, as_csv: bool) -> Result<String, CliError> {
    if q.n == 0 || !(q.sigma > 0.0) || !(q.k_scale > 0.0) || !(q.lengthscale > 0.0) || !(q.beta >= 0.0) || !q.threshold.is_finite()
    {
        return Err(CliError::Validation(
            "need n >= 1, sigma > 0, k-scale > 0, lengthscale > 0, beta >= 0 and a finite threshold".into(),
        ));
    }
    let res = exploration(q.kernel, q.beta, q.threshold, q.n, q.sigma, q.k_scale);
    let head = "kernel,n,sigma,k_scale,threshold,beta,lengthscale,delta,unit_radius,radius,bound,note";
    let inputs = format!("{},{},{},{},{},{},{}", q.kernel.name(), q.n, q.sigma, q.k_scale, q.threshold, q.beta, q.lengthscale);
    Ok(match res {
        Ok(e) => {
            let r = e.radius(q.lengthscale);
            if as_csv {
                format!("{head}\n{inputs},{},{},{r},{},\n", e.delta, e.unit_radius, e.bound)
            } else {
                format!(
                    "delta* = {:.6e}\nradius = {:.6} (unit lengthscale) x {} = {:.6}\nbound = {:.6}\n",
                    e.delta, e.unit_radius, q.lengthscale, r, e.bound
                )
            }
        }
        Err(_) => {
            let why = feasibility_failure(q.beta, q.threshold, q.k_scale).unwrap_or_else(|| "no feasible delta".into());
            let msg = format!("no bound (trivially-safe prior regime): {why}");
            if as_csv {
                format!("{head}\n{inputs},,,,,\"{msg}\"\n")
            } else {
                format!("{msg}\n")
            }
        }
    })
}

pub fn cmd_report(files: &[PathBuf], as_csv: bool) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for f in files {
        let file = File::open(f).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", f.display())))?;
        rows.extend(read_summary(file).map_err(|e| CliError::Validation(format!("{}: {e}", f.display())))?);
    }
    if rows.is_empty() {
        return Err(CliError::Validation("no summary rows to report".into()));
    }
    let aggs = aggregate(&rows);
    Ok(if as_csv { render_csv(&aggs) } else { render_table(&aggs) })
}
