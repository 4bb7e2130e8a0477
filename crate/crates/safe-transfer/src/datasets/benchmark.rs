//! End-to-end construction of the synthetic benchmarks: task functions,
//! source data, initial target data, pool and region map.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::Serialize;

use super::functions::{sample_branin_task, sample_hartmann_task, BraninConstants, BRANIN_HI, BRANIN_LO, HARTMANN_STANDARD};
use super::mogp::{MogpMetadata, MogpPrior};
use super::rejection::{rejection_filter_masks, RejectReason, Verdict};
use super::{
    csv_io, make_initial_target_data, make_pool, sample_where, stream_rng, ClosedForm, ClosedFormKind, Domain,
    GridFunction, LookupTable, Oracle, Region, TaskFunction, SYNTHETIC_NOISE_STD,
};
use crate::error::{Error, Result};
use crate::gp::LabeledDataset;
use crate::kernels::TaskTag;
use crate::metrics::{ccl_label, GridGeometry, RegionLabeling};
use crate::safe_loop::Pool;

const STREAM_TASKS: u64 = 1;
const STREAM_SOURCE_X: u64 = 2;
const STREAM_SOURCE_NOISE: u64 = 3;
const STREAM_INIT_X: u64 = 4;
const STREAM_INIT_NOISE: u64 = 5;
const STREAM_POOL: u64 = 6;
const STREAM_NORMALIZE: u64 = 7;
const STREAM_RUN_NOISE: u64 = 8;
const STREAM_TEST: u64 = 9;

/// Function redraws per sampled set of GP hyperparameters.
const DRAWS_PER_PRIOR: usize = 10;
const BRANIN_GRID: usize = 200;
const TOY_GRID: usize = 2001;
const TOY_NOISE_STD: f64 = 0.1;
const HARTMANN_NORMALIZE_SAMPLES: usize = 10_000;
/// Test points drawn from the true safe set for RMSE.
pub const RMSE_TEST_POINTS: usize = 1000;

fn derive_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BenchmarkKind {
    Gp1d,
    Gp2d,
    Branin,
    Hartmann3,
    /// One-dimensional illustration with two disjoint safe regions.
    Toy1d,
    CustomCsv,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 6] = [
        BenchmarkKind::Gp1d,
        BenchmarkKind::Gp2d,
        BenchmarkKind::Branin,
        BenchmarkKind::Hartmann3,
        BenchmarkKind::Toy1d,
        BenchmarkKind::CustomCsv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Gp1d => "gp1d",
            BenchmarkKind::Gp2d => "gp2d",
            BenchmarkKind::Branin => "branin",
            BenchmarkKind::Hartmann3 => "hartmann3",
            BenchmarkKind::Toy1d => "toy1d",
            BenchmarkKind::CustomCsv => "custom-csv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        BenchmarkKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn dim(self) -> Option<usize> {
        match self {
            BenchmarkKind::Gp1d | BenchmarkKind::Toy1d => Some(1),
            BenchmarkKind::Gp2d | BenchmarkKind::Branin => Some(2),
            BenchmarkKind::Hartmann3 => Some(3),
            BenchmarkKind::CustomCsv => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Sizes {
    pub n_source: usize,
    pub n_init: usize,
    pub n_query: usize,
    pub n_pool: usize,
}

impl Sizes {
    pub fn defaults(kind: BenchmarkKind) -> Self {
        let (n_source, n_init, n_query, n_pool) = match kind {
            BenchmarkKind::Gp1d | BenchmarkKind::Toy1d => (100, 10, 50, 5000),
            BenchmarkKind::Gp2d => (250, 20, 100, 5000),
            BenchmarkKind::Branin | BenchmarkKind::Hartmann3 => (100, 20, 100, 5000),
            BenchmarkKind::CustomCsv => (0, 10, 50, 0),
        };
        Sizes { n_source, n_init, n_query, n_pool }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub kind: BenchmarkKind,
    pub seed: u64,
    pub sizes: Sizes,
    pub n_sources: usize,
    /// Cap on rejected task draws.
    pub max_attempts: usize,
    /// Threshold per safety output; zeros when absent.
    pub thresholds: Option<Vec<f64>>,
    pub source_csv: Option<PathBuf>,
    pub target_csv: Option<PathBuf>,
}

impl BenchmarkOptions {
    pub fn new(kind: BenchmarkKind, seed: u64) -> Self {
        BenchmarkOptions {
            kind,
            seed,
            sizes: Sizes::defaults(kind),
            n_sources: 1,
            max_attempts: 1000,
            thresholds: None,
            source_csv: None,
            target_csv: None,
        }
    }
}

/// Connected safe regions of the target on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub grid: GridGeometry,
    pub labeling: RegionLabeling,
}

impl RegionMap {
    pub fn label_of(&self, x: &[f64]) -> Result<usize> {
        crate::metrics::region_of(x, &self.labeling, &self.grid)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkMetadata {
    pub benchmark: String,
    pub seed: u64,
    pub dim: usize,
    pub n_sources: usize,
    pub noise_std: f64,
    pub thresholds: Vec<f64>,
    pub sizes: Sizes,
    /// Task draws until acceptance.
    pub attempts: usize,
    /// Task constants, sources first and target last.
    pub constants: Vec<Vec<f64>>,
    /// Mean and standard deviation removed per task (sources first).
    pub normalization: Vec<(f64, f64)>,
    pub gp_prior: Option<MogpMetadata>,
    pub target_regions: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub kind: BenchmarkKind,
    pub seed: u64,
    pub domain: Domain,
    pub thresholds: Vec<f64>,
    pub noise_std: f64,
    pub sizes: Sizes,
    pub target: Arc<dyn TaskFunction>,
    pub source_functions: Vec<Arc<dyn TaskFunction>>,
    pub sources: Vec<LabeledDataset>,
    pub initial: LabeledDataset,
    pub pool: Pool,
    pub regions: Option<RegionMap>,
    /// Lattice values of every task (sources first) for grid benchmarks.
    pub grids: Vec<GridFunction>,
    pub metadata: BenchmarkMetadata,
}

impl Benchmark {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_safety(&self) -> usize {
        self.thresholds.len()
    }

    /// Target oracle for the learning loop, independent of the noise used
    /// while building the data.
    pub fn target_oracle(&self) -> Result<Oracle> {
        Oracle::new(
            self.target.clone(),
            self.domain.clone(),
            self.thresholds.clone(),
            self.noise_std,
            stream_rng(self.seed, STREAM_RUN_NOISE),
        )
    }

    /// Points of the true safe set for RMSE, drawn once with a fixed seed,
    /// with their noise-free main output.
    pub fn test_points(&self, n: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let oracle = self.target_oracle()?;
        let row = |x: &DMatrix<f64>, i: usize| -> Vec<f64> { x.row(i).iter().copied().collect() };
        let x = if self.kind == BenchmarkKind::CustomCsv {
            // recorded rows only: the pool rows that are safe
            let safe: Vec<usize> = (0..self.pool.len())
                .filter(|i| oracle.ground_truth_safe(&self.pool.point(*i)).unwrap_or(false))
                .collect();
            self.pool.rows(&safe)
        } else {
            let mut rng = stream_rng(self.seed, STREAM_TEST);
            sample_where(&self.domain, n, &mut rng, 10_000 * n.max(1), |p| oracle.ground_truth_safe(p).unwrap_or(false))?
        };
        let f = (0..x.nrows()).map(|i| oracle.truth(&row(&x, i)).map(|t| t.0)).collect::<Result<_>>()?;
        Ok((x, f))
    }

    /// Ground-truth safety of every pool point.
    pub fn true_safe_mask(&self) -> Result<Vec<bool>> {
        let oracle = self.target_oracle()?;
        (0..self.pool.len()).map(|i| oracle.ground_truth_safe(&self.pool.point(i))).collect()
    }
}

pub fn build_benchmark(opts: &BenchmarkOptions) -> Result<Benchmark> {
    if opts.n_sources == 0 && opts.kind != BenchmarkKind::CustomCsv {
        return Err(Error::Config("at least one source task is required".into()));
    }
    match opts.kind {
        BenchmarkKind::Gp1d => build_gp(opts, 1),
        BenchmarkKind::Gp2d => build_gp(opts, 2),
        BenchmarkKind::Branin => build_branin(opts),
        BenchmarkKind::Hartmann3 => build_hartmann(opts),
        BenchmarkKind::Toy1d => build_toy(opts),
        BenchmarkKind::CustomCsv => build_custom(opts),
    }
}

fn zero_thresholds(opts: &BenchmarkOptions, j: usize) -> Result<Vec<f64>> {
    match &opts.thresholds {
        Some(t) if t.len() != j => Err(Error::Config(format!("{} thresholds given for {j} safety outputs", t.len()))),
        Some(t) => Ok(t.clone()),
        None => Ok(vec![0.0; j]),
    }
}

fn rejection_error(attempts: usize, reasons: &BTreeMap<RejectReason, usize>) -> Error {
    let worst = reasons.iter().max_by_key(|(r, c)| (**c, std::cmp::Reverse(**r))).map(|(r, _)| *r);
    Error::Rejection {
        attempts,
        reason: worst.map(|r| r.describe().to_string()).unwrap_or_else(|| "none recorded".into()),
    }
}

/// Source observations, one dataset per source task.
fn source_data(
    opts: &BenchmarkOptions,
    domain: &Domain,
    thresholds: &[f64],
    noise: f64,
    fns: &[Arc<dyn TaskFunction>],
    safe_only: bool,
) -> Result<Vec<LabeledDataset>> {
    let mut loc = stream_rng(opts.seed, STREAM_SOURCE_X);
    let mut out = Vec::new();
    for (p, f) in fns.iter().enumerate() {
        let noise_rng = stream_rng(opts.seed, STREAM_SOURCE_NOISE + 100 * p as u64);
        let mut oracle = Oracle::new(f.clone(), domain.clone(), thresholds.to_vec(), noise, noise_rng)?;
        let n = opts.sizes.n_source;
        let x = if safe_only {
            let o = oracle.clone();
            sample_where(domain, n, &mut loc, 10_000 * n.max(1), |x| o.ground_truth_safe(x).unwrap_or(false))?
        } else {
            sample_where(domain, n, &mut loc, n, |_| true)?
        };
        out.push(oracle.observe(&x)?);
    }
    Ok(out)
}

fn initial_and_pool(
    opts: &BenchmarkOptions,
    domain: &Domain,
    thresholds: &[f64],
    noise: f64,
    target: &Arc<dyn TaskFunction>,
    region: &Region,
) -> Result<(LabeledDataset, Pool)> {
    let mut oracle =
        Oracle::new(target.clone(), domain.clone(), thresholds.to_vec(), noise, stream_rng(opts.seed, STREAM_INIT_NOISE))?;
    let initial = make_initial_target_data(&mut oracle, region, opts.sizes.n_init, derive_seed(opts.seed, STREAM_INIT_X))?;
    let pool = make_pool(domain, opts.sizes.n_pool, derive_seed(opts.seed, STREAM_POOL));
    Ok((initial, pool))
}

/// Region map of the target mask and the largest component shared by the
/// target and every source.
fn regions_and_shared(grid: &GridGeometry, target: &[bool], sources: &[Vec<bool>]) -> Result<(RegionMap, Region)> {
    let labeling = ccl_label(target, &grid.shape)?;
    let shared: Vec<bool> = (0..target.len()).map(|i| target[i] && sources.iter().all(|s| s[i])).collect();
    let sl = ccl_label(&shared, &grid.shape)?;
    let big = sl
        .largest_region()
        .ok_or_else(|| Error::Input("no safe area shared by source and target".into()))?;
    let cells = (0..shared.len()).filter(|i| sl.labels[*i] == big).collect();
    Ok((RegionMap { grid: grid.clone(), labeling }, Region::Cells { grid: grid.clone(), cells }))
}

fn build_gp(opts: &BenchmarkOptions, dim: usize) -> Result<Benchmark> {
    let thresholds = zero_thresholds(opts, 1)?;
    let p = opts.n_sources;
    let mut rng = stream_rng(opts.seed, STREAM_TASKS);
    let mut attempts = 0;
    let mut reasons = BTreeMap::new();
    let (prior, mut tasks, stats) = 'search: loop {
        let prior = MogpPrior::sample(dim, p + 1, (0.1, 1.0), &mut rng)?;
        for _ in 0..DRAWS_PER_PRIOR {
            if attempts >= opts.max_attempts {
                return Err(rejection_error(attempts, &reasons));
            }
            attempts += 1;
            let (tasks, stats) = prior.draw_tasks(2, &mut rng);
            let tmask = tasks[p].safe_mask(&thresholds)?;
            let mut verdict = Verdict::Accept;
            for s in &tasks[..p] {
                verdict = rejection_filter_masks(&s.safe_mask(&thresholds)?, &tmask, &prior.grid.shape)?;
                if verdict != Verdict::Accept {
                    break;
                }
            }
            match verdict {
                Verdict::Accept => break 'search (prior, tasks, stats),
                Verdict::Reject(r) => *reasons.entry(r).or_insert(0) += 1,
            }
        }
    };
    let grid = prior.grid.clone();
    let domain = Domain::new(grid.lo.clone(), grid.hi.clone())?;
    let tmask = tasks[p].safe_mask(&thresholds)?;
    let smasks = tasks[..p].iter().map(|s| s.safe_mask(&thresholds)).collect::<Result<Vec<_>>>()?;
    let (regions, shared) = regions_and_shared(&grid, &tmask, &smasks)?;
    let grids = tasks.clone();
    let target: Arc<dyn TaskFunction> = Arc::new(tasks.pop().expect("target task"));
    let source_functions: Vec<Arc<dyn TaskFunction>> =
        tasks.iter().cloned().map(|t| Arc::new(t) as Arc<dyn TaskFunction>).collect();
    let sources = source_data(opts, &domain, &thresholds, SYNTHETIC_NOISE_STD, &source_functions, true)?;
    let (initial, pool) = initial_and_pool(opts, &domain, &thresholds, SYNTHETIC_NOISE_STD, &target, &shared)?;
    let normalization = stats.iter().map(|s| s[0]).collect();
    let metadata = BenchmarkMetadata {
        benchmark: opts.kind.name().into(),
        seed: opts.seed,
        dim,
        n_sources: p,
        noise_std: SYNTHETIC_NOISE_STD,
        thresholds: thresholds.clone(),
        sizes: opts.sizes,
        attempts,
        constants: Vec::new(),
        normalization,
        gp_prior: Some(prior.metadata(stats)),
        target_regions: Some(regions.labeling.count),
    };
    Ok(Benchmark {
        kind: opts.kind,
        seed: opts.seed,
        domain,
        thresholds,
        noise_std: SYNTHETIC_NOISE_STD,
        sizes: opts.sizes,
        target,
        source_functions,
        sources,
        initial,
        pool,
        regions: Some(regions),
        grids,
        metadata,
    })
}

fn lattice(domain: &Domain, per_axis: usize) -> Result<GridGeometry> {
    GridGeometry::new(domain.lo.clone(), domain.hi.clone(), vec![per_axis; domain.dim()])
}

fn grid_points(grid: &GridGeometry) -> Vec<Vec<f64>> {
    (0..grid.len()).map(|i| grid.point(i)).collect()
}

fn build_branin(opts: &BenchmarkOptions) -> Result<Benchmark> {
    let thresholds = zero_thresholds(opts, 1)?;
    let domain = Domain::new(BRANIN_LO.to_vec(), BRANIN_HI.to_vec())?;
    let grid = lattice(&domain, BRANIN_GRID)?;
    let pts = grid_points(&grid);
    let normalized = |k: BraninConstants| ClosedForm::normalized_on(ClosedFormKind::Branin(k), pts.iter().map(|p| &p[..]));
    let target = normalized(BraninConstants::standard());
    let tgrid = GridFunction::tabulate(grid.clone(), &target)?;
    let tmask = tgrid.safe_mask(&thresholds)?;
    let mut rng = stream_rng(opts.seed, STREAM_TASKS);
    let mut attempts = 0;
    let mut reasons = BTreeMap::new();
    let mut sources = Vec::new();
    let mut smasks = Vec::new();
    while sources.len() < opts.n_sources {
        if attempts >= opts.max_attempts {
            return Err(rejection_error(attempts, &reasons));
        }
        attempts += 1;
        let s = normalized(sample_branin_task(&mut rng));
        let smask = GridFunction::tabulate(grid.clone(), &s)?.safe_mask(&thresholds)?;
        match rejection_filter_masks(&smask, &tmask, &grid.shape)? {
            Verdict::Accept => {
                sources.push(s);
                smasks.push(smask);
            }
            Verdict::Reject(r) => *reasons.entry(r).or_insert(0) += 1,
        }
    }
    let (regions, shared) = regions_and_shared(&grid, &tmask, &smasks)?;
    closed_form_benchmark(opts, domain, thresholds, sources, target, Some(regions), &shared, attempts)
}

fn build_hartmann(opts: &BenchmarkOptions) -> Result<Benchmark> {
    let thresholds = zero_thresholds(opts, 1)?;
    let domain = Domain::new(vec![0.0; 3], vec![1.0; 3])?;
    let mut nrng = stream_rng(opts.seed, STREAM_NORMALIZE);
    let pts: Vec<Vec<f64>> = (0..HARTMANN_NORMALIZE_SAMPLES).map(|_| domain.sample(&mut nrng)).collect();
    let normalized = |a: [f64; 4]| ClosedForm::normalized_on(ClosedFormKind::Hartmann3(a), pts.iter().map(|p| &p[..]));
    let target = normalized(HARTMANN_STANDARD);
    let mut rng = stream_rng(opts.seed, STREAM_TASKS);
    let sources = (0..opts.n_sources).map(|_| normalized(sample_hartmann_task(&mut rng))).collect();
    closed_form_benchmark(opts, domain, thresholds, sources, target, None, &Region::Domain, opts.n_sources)
}

fn build_toy(opts: &BenchmarkOptions) -> Result<Benchmark> {
    if opts.n_sources != 1 {
        return Err(Error::Config("toy1d has exactly one source task".into()));
    }
    let thresholds = zero_thresholds(opts, 1)?;
    let domain = Domain::new(vec![-1.0], vec![1.0])?;
    let grid = lattice(&domain, TOY_GRID)?;
    let target = ClosedForm::raw(ClosedFormKind::ToyTarget);
    let source = ClosedForm::raw(ClosedFormKind::ToySource);
    let tmask = GridFunction::tabulate(grid.clone(), &target)?.safe_mask(&thresholds)?;
    let labeling = ccl_label(&tmask, &grid.shape)?;
    // initial data sit in the left-hand safe region
    let left = labeling.labels[grid.nearest_cell(&[-0.78])?];
    if left == 0 {
        return Err(Error::Input("toy target is unsafe at x = -0.78".into()));
    }
    let cells = (0..grid.len()).filter(|i| labeling.labels[*i] == left).collect();
    let region = Region::Cells { grid: grid.clone(), cells };
    let regions = RegionMap { grid, labeling };
    let mut b = closed_form_benchmark(opts, domain, thresholds, vec![source], target, Some(regions), &region, 1)?;
    b.noise_std = TOY_NOISE_STD;
    b.metadata.noise_std = TOY_NOISE_STD;
    Ok(b)
}

#[allow(clippy::too_many_arguments)]
fn closed_form_benchmark(
    opts: &BenchmarkOptions,
    domain: Domain,
    thresholds: Vec<f64>,
    sources: Vec<ClosedForm>,
    target: ClosedForm,
    regions: Option<RegionMap>,
    init_region: &Region,
    attempts: usize,
) -> Result<Benchmark> {
    let noise = if opts.kind == BenchmarkKind::Toy1d { TOY_NOISE_STD } else { SYNTHETIC_NOISE_STD };
    let mut constants: Vec<Vec<f64>> = sources.iter().map(|s| s.constants()).collect();
    constants.push(target.constants());
    let mut normalization: Vec<(f64, f64)> = sources.iter().map(|s| (s.mean, s.sd)).collect();
    normalization.push((target.mean, target.sd));
    let source_functions: Vec<Arc<dyn TaskFunction>> =
        sources.into_iter().map(|s| Arc::new(s) as Arc<dyn TaskFunction>).collect();
    let target: Arc<dyn TaskFunction> = Arc::new(target);
    let source_sets = source_data(opts, &domain, &thresholds, noise, &source_functions, false)?;
    let (initial, pool) = initial_and_pool(opts, &domain, &thresholds, noise, &target, init_region)?;
    let metadata = BenchmarkMetadata {
        benchmark: opts.kind.name().into(),
        seed: opts.seed,
        dim: domain.dim(),
        n_sources: source_functions.len(),
        noise_std: noise,
        thresholds: thresholds.clone(),
        sizes: opts.sizes,
        attempts,
        constants,
        normalization,
        gp_prior: None,
        target_regions: regions.as_ref().map(|r| r.labeling.count),
    };
    Ok(Benchmark {
        kind: opts.kind,
        seed: opts.seed,
        domain,
        thresholds,
        noise_std: noise,
        sizes: opts.sizes,
        target,
        source_functions,
        sources: source_sets,
        initial,
        pool,
        regions,
        grids: Vec::new(),
        metadata,
    })
}

fn build_custom(opts: &BenchmarkOptions) -> Result<Benchmark> {
    let (sp, tp) = match (&opts.source_csv, &opts.target_csv) {
        (Some(s), Some(t)) => (s, t),
        _ => return Err(Error::Config("custom-csv needs source_csv and target_csv".into())),
    };
    let read = |p: &PathBuf| -> Result<Vec<(TaskTag, LabeledDataset)>> {
        let f = std::fs::File::open(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        csv_io::read_datasets(f)
    };
    let mut source_sets: Vec<(TaskTag, LabeledDataset)> = read(sp)?;
    source_sets.retain(|(t, _)| *t != TaskTag::Target);
    source_sets.sort_by_key(|(t, _)| match t {
        TaskTag::Source(p) => *p,
        TaskTag::Target => usize::MAX,
    });
    let table = read(tp)?
        .into_iter()
        .find(|(t, _)| *t == TaskTag::Target)
        .map(|(_, d)| d)
        .ok_or_else(|| Error::Input("target CSV has no rows tagged t".into()))?;
    let dim = table.dim();
    if source_sets.iter().any(|(_, d)| d.dim() != dim || d.n_safety() != table.n_safety()) {
        return Err(Error::Dimension("source and target CSVs disagree in columns".into()));
    }
    let thresholds = zero_thresholds(opts, table.n_safety())?;
    let lo: Vec<f64> = (0..dim).map(|k| table.x.column(k).min()).collect();
    let hi: Vec<f64> = (0..dim).map(|k| table.x.column(k).max()).collect();
    let hi: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| if b > *a { b } else { a + 1.0 }).collect();
    let domain = Domain::new(lo, hi)?;
    let lookup = LookupTable { data: table.clone() };
    let safe = |i: usize| table.z.row(i).iter().zip(&thresholds).all(|(v, t)| v >= t);
    let init_rows: Vec<usize> = (0..table.len()).filter(|i| safe(*i)).take(opts.sizes.n_init).collect();
    if init_rows.len() < opts.sizes.n_init {
        return Err(Error::Input(format!(
            "target CSV has only {} safe rows for {} initial points",
            init_rows.len(),
            opts.sizes.n_init
        )));
    }
    let mut initial = LabeledDataset::empty(dim, table.n_safety());
    for i in &init_rows {
        initial.push(&table.row(i.to_owned()), table.y[*i], &table.z.row(*i).iter().copied().collect::<Vec<_>>())?;
    }
    let rest: Vec<usize> = (0..table.len()).filter(|i| !init_rows.contains(i)).collect();
    let pool = Pool::new(DMatrix::from_fn(rest.len(), dim, |r, c| table.x[(rest[r], c)]));
    let sizes = Sizes { n_source: source_sets.iter().map(|(_, d)| d.len()).sum(), n_pool: pool.len(), ..opts.sizes };
    let metadata = BenchmarkMetadata {
        benchmark: opts.kind.name().into(),
        seed: opts.seed,
        dim,
        n_sources: source_sets.len(),
        noise_std: 0.0,
        thresholds: thresholds.clone(),
        sizes,
        attempts: 0,
        constants: Vec::new(),
        normalization: Vec::new(),
        gp_prior: None,
        target_regions: None,
    };
    Ok(Benchmark {
        kind: opts.kind,
        seed: opts.seed,
        domain,
        thresholds,
        noise_std: 0.0,
        sizes,
        target: Arc::new(lookup),
        source_functions: Vec::new(),
        sources: source_sets.into_iter().map(|(_, d)| d).collect(),
        initial,
        pool,
        regions: None,
        grids: Vec::new(),
        metadata,
    })
}
