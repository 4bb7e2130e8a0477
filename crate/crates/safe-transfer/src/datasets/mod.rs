//! Synthetic tasks, noisy oracles, pools and initial data.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gp::LabeledDataset;
use crate::metrics::GridGeometry;
use crate::safe_loop::Pool;

mod benchmark;
pub mod csv_io;
pub mod functions;
pub mod mogp;
pub mod rejection;

pub use benchmark::{build_benchmark, Benchmark, BenchmarkKind, BenchmarkMetadata, BenchmarkOptions, RegionMap, Sizes, RMSE_TEST_POINTS};
pub use mogp::{sample_mogp_functions, MogpPrior};
pub use rejection::{rejection_filter, rejection_filter_masks, RejectReason, Verdict};

/// Observation noise of the synthetic benchmarks.
pub const SYNTHETIC_NOISE_STD: f64 = 0.01;

/// RNG for one named purpose under a run seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Input("domain needs matching non-empty bounds with lo < hi".into()));
        }
        Ok(Domain { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| rng.gen_range(*a..*b)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// Noise-free main output and safety outputs of one task.
pub trait TaskFunction: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn n_safety(&self) -> usize;
    /// `x` must lie in the task's domain.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);
    /// True when the safety output is the main output itself; a noisy query
    /// then returns the same draw for both.
    fn safety_is_main(&self) -> bool {
        false
    }
}

/// Values on a regular lattice, read back by multilinear interpolation.
/// Output 0 is the main output; outputs `1..` are safety outputs. A single
/// output serves as both.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: GridGeometry,
    pub outputs: Vec<Vec<f64>>,
}

impl GridFunction {
    pub fn new(grid: GridGeometry, outputs: Vec<Vec<f64>>) -> Result<Self> {
        if outputs.is_empty() || outputs.iter().any(|o| o.len() != grid.len()) {
            return Err(Error::Dimension(format!("every output needs {} grid values", grid.len())));
        }
        Ok(GridFunction { grid, outputs })
    }

    /// Tabulates a closed-form function at every lattice point.
    pub fn tabulate(grid: GridGeometry, f: &dyn TaskFunction) -> Result<Self> {
        let n = grid.len();
        let mut outputs = vec![Vec::with_capacity(n); 1 + if f.safety_is_main() { 0 } else { f.n_safety() }];
        for i in 0..n {
            let (y, z) = f.eval(&grid.point(i));
            outputs[0].push(y);
            if !f.safety_is_main() {
                for (j, v) in z.into_iter().enumerate() {
                    outputs[j + 1].push(v);
                }
            }
        }
        GridFunction::new(grid, outputs)
    }

    fn safety_channels(&self) -> std::ops::Range<usize> {
        if self.outputs.len() == 1 {
            0..1
        } else {
            1..self.outputs.len()
        }
    }

    /// Cells whose safety outputs all clear their thresholds.
    pub fn safe_mask(&self, thresholds: &[f64]) -> Result<Vec<bool>> {
        let ch = self.safety_channels();
        if thresholds.len() != ch.len() {
            return Err(Error::Dimension(format!("{} thresholds for {} safety outputs", thresholds.len(), ch.len())));
        }
        Ok((0..self.grid.len())
            .map(|i| ch.clone().zip(thresholds).all(|(c, t)| self.outputs[c][i] >= *t))
            .collect())
    }

    /// Multilinear interpolation of one output; `x` is clamped to the grid.
    pub fn interpolate(&self, output: usize, x: &[f64]) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let u = ((x[k] - g.lo[k]) / g.step(k)).clamp(0.0, (g.shape[k] - 1) as f64);
            let i = (u.floor() as usize).min(g.shape[k] - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let vals = &self.outputs[output];
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                idx[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * vals[g.flat_index(&idx)];
            }
        }
        acc
    }
}

impl TaskFunction for GridFunction {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn n_safety(&self) -> usize {
        self.safety_channels().len()
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let y = self.interpolate(0, x);
        if self.outputs.len() == 1 {
            (y, vec![y])
        } else {
            (y, self.safety_channels().map(|c| self.interpolate(c, x)).collect())
        }
    }

    fn safety_is_main(&self) -> bool {
        self.outputs.len() == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormKind {
    Branin(functions::BraninConstants),
    Hartmann3([f64; 4]),
    ToyTarget,
    ToySource,
}

/// Closed-form function shifted and scaled, `(g(x) - mean) / sd`, used as
/// main and safety output at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub kind: ClosedFormKind,
    pub mean: f64,
    pub sd: f64,
}

impl ClosedForm {
    pub fn raw(kind: ClosedFormKind) -> Self {
        ClosedForm { kind, mean: 0.0, sd: 1.0 }
    }

    pub fn raw_value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ClosedFormKind::Branin(k) => functions::branin_unchecked(x[0], x[1], k),
            ClosedFormKind::Hartmann3(a) => functions::hartmann3_unchecked(x, a),
            ClosedFormKind::ToyTarget => functions::toy_target(x[0]),
            ClosedFormKind::ToySource => functions::toy_source(x[0]),
        }
    }

    /// Sets mean and sd from the raw values at `xs` (population variance).
    pub fn normalized_on<'a, I: IntoIterator<Item = &'a [f64]>>(kind: ClosedFormKind, xs: I) -> Self {
        let raw = ClosedForm::raw(kind);
        let mut v: Vec<f64> = xs.into_iter().map(|x| raw.raw_value(x)).collect();
        let (mean, sd) = mogp::normalize(&mut v);
        ClosedForm { kind, mean, sd }
    }

    pub fn constants(&self) -> Vec<f64> {
        match &self.kind {
            ClosedFormKind::Branin(k) => k.as_array().to_vec(),
            ClosedFormKind::Hartmann3(a) => a.to_vec(),
            _ => Vec::new(),
        }
    }
}

impl TaskFunction for ClosedForm {
    fn dim(&self) -> usize {
        match self.kind {
            ClosedFormKind::Branin(_) => 2,
            ClosedFormKind::Hartmann3(_) => 3,
            _ => 1,
        }
    }

    fn n_safety(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let v = (self.raw_value(x) - self.mean) / self.sd;
        (v, vec![v])
    }

    fn safety_is_main(&self) -> bool {
        true
    }
}

/// Finite table of recorded observations; a query returns the row nearest
/// to `x` (lowest row on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    pub data: LabeledDataset,
}

impl LookupTable {
    pub fn nearest_row(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.data.len() {
            let d: f64 = (0..x.len()).map(|k| (self.data.x[(i, k)] - x[k]).powi(2)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

impl TaskFunction for LookupTable {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn n_safety(&self) -> usize {
        self.data.n_safety()
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let i = self.nearest_row(x);
        (self.data.y[i], self.data.z.row(i).iter().copied().collect())
    }
}

/// Noisy access to one task. Owns its RNG stream.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub function: Arc<dyn TaskFunction>,
    pub domain: Domain,
    pub thresholds: Vec<f64>,
    pub noise_std: f64,
    rng: ChaCha8Rng,
}

impl Oracle {
    pub fn new(
        function: Arc<dyn TaskFunction>,
        domain: Domain,
        thresholds: Vec<f64>,
        noise_std: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if function.dim() != domain.dim() {
            return Err(Error::Dimension("function and domain dimensions differ".into()));
        }
        if thresholds.len() != function.n_safety() {
            return Err(Error::Dimension(format!(
                "{} thresholds for {} safety outputs",
                thresholds.len(),
                function.n_safety()
            )));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::Input("noise std must be non-negative".into()));
        }
        Ok(Oracle { function, domain, thresholds, noise_std, rng })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_safety(&self) -> usize {
        self.thresholds.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if !self.domain.contains(x) {
            return Err(Error::Input(format!("query {x:?} lies outside the domain")));
        }
        Ok(())
    }

    /// Noise-free outputs.
    pub fn truth(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(x)?;
        Ok(self.function.eval(x))
    }

    pub fn ground_truth_safe(&self, x: &[f64]) -> Result<bool> {
        Ok(self.is_safe(&self.truth(x)?.1))
    }

    pub fn is_safe(&self, z: &[f64]) -> bool {
        z.iter().zip(&self.thresholds).all(|(v, t)| v >= t)
    }

    /// One noisy observation `(y, z)`.
    pub fn query(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, q) = self.truth(x)?;
        if self.noise_std == 0.0 {
            return Ok((f, q));
        }
        let n = Normal::new(0.0, self.noise_std).expect("valid noise std");
        let y = f + n.sample(&mut self.rng);
        if self.function.safety_is_main() {
            return Ok((y, vec![y; q.len()]));
        }
        let z = q.iter().map(|v| v + n.sample(&mut self.rng)).collect();
        Ok((y, z))
    }

    /// Queries every row of `x`.
    pub fn observe(&mut self, x: &DMatrix<f64>) -> Result<LabeledDataset> {
        let mut d = LabeledDataset::empty(self.dim(), self.n_safety());
        for i in 0..x.nrows() {
            let p: Vec<f64> = x.row(i).iter().copied().collect();
            let (y, z) = self.query(&p)?;
            d.push(&p, y, &z)?;
        }
        Ok(d)
    }
}

/// Uniform i.i.d. pool over the domain.
pub fn make_pool(domain: &Domain, n_pool: usize, seed: u64) -> Pool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n_pool, domain.dim());
    for i in 0..n_pool {
        for (k, v) in domain.sample(&mut rng).into_iter().enumerate() {
            x[(i, k)] = v;
        }
    }
    Pool::new(x)
}

/// Uniform points of the domain that pass `keep`, by rejection.
pub fn sample_where<R: Rng>(
    domain: &Domain,
    n: usize,
    rng: &mut R,
    max_draws: usize,
    mut keep: impl FnMut(&[f64]) -> bool,
) -> Result<DMatrix<f64>> {
    let mut x = DMatrix::zeros(n, domain.dim());
    let mut got = 0;
    let mut draws = 0;
    while got < n {
        if draws >= max_draws {
            return Err(Error::Input(format!("only {got} of {n} points found in the region after {draws} draws")));
        }
        draws += 1;
        let p = domain.sample(rng);
        if keep(&p) {
            for (k, v) in p.into_iter().enumerate() {
                x[(got, k)] = v;
            }
            got += 1;
        }
    }
    Ok(x)
}

/// Where initial target data may be placed.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Anywhere in the domain.
    Domain,
    /// Union of the lattice cells (Voronoi boxes of the listed grid points).
    Cells { grid: GridGeometry, cells: Vec<usize> },
}

/// `n_init` noisy observations at uniformly drawn ground-truth-safe points
/// of `region`.
pub fn make_initial_target_data(oracle: &mut Oracle, region: &Region, n_init: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 1000 * n_init.max(1);
    let mut data = LabeledDataset::empty(oracle.dim(), oracle.n_safety());
    let member = match region {
        Region::Cells { grid, cells } => {
            let mut m = vec![false; grid.len()];
            for c in cells {
                m[*c] = true;
            }
            m
        }
        Region::Domain => Vec::new(),
    };
    let mut tries = 0;
    while data.len() < n_init {
        if tries >= budget {
            return Err(Error::Input(format!(
                "region too small: {} of {n_init} safe initial points after {tries} draws",
                data.len()
            )));
        }
        tries += 1;
        let x = match region {
            Region::Domain => oracle.domain.sample(&mut rng),
            Region::Cells { grid, cells } => {
                if cells.is_empty() {
                    return Err(Error::Input("region too small: no cells".into()));
                }
                let c = grid.point(cells[rng.gen_range(0..cells.len())]);
                let x: Vec<f64> = c
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let h = 0.5 * grid.step(k);
                        (v + rng.gen_range(-h..h)).clamp(oracle.domain.lo[k], oracle.domain.hi[k])
                    })
                    .collect();
                if !member[grid.nearest_cell(&x)?] {
                    continue;
                }
                x
            }
        };
        if oracle.ground_truth_safe(&x)? {
            let (y, z) = oracle.query(&x)?;
            data.push(&x, y, &z)?;
        }
    }
    Ok(data)
}
