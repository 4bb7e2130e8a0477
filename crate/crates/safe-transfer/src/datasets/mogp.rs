//! Multi-output GP samples on a regular grid.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::GridFunction;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::linalg;
use crate::metrics::GridGeometry;

pub const GRID_PER_AXIS: usize = 100;
pub const GRID_HALF_WIDTH: f64 = 2.0;
/// Latent kernels in the sampling prior.
pub const N_LATENT: usize = 2;

/// Lower Kronecker product `A (x) B`.
pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Sampling prior `sum_l W_l W_l^T (x) k_l` with both factors of every term
/// already Cholesky-factored.
#[derive(Debug, Clone)]
pub struct MogpPrior {
    pub grid: GridGeometry,
    pub lengthscales: Vec<Vec<f64>>,
    /// Row-normalised mixing matrices, one per latent, `T x T`.
    pub w: Vec<DMatrix<f64>>,
    l_k: Vec<DMatrix<f64>>,
    l_b: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MogpMetadata {
    pub lengthscales: Vec<Vec<f64>>,
    pub w: Vec<Vec<Vec<f64>>>,
    /// Mean and standard deviation removed from each (task, output) column.
    pub normalization: Vec<Vec<(f64, f64)>>,
}

pub fn grid_geometry(dim: usize) -> Result<GridGeometry> {
    GridGeometry::new(vec![-GRID_HALF_WIDTH; dim], vec![GRID_HALF_WIDTH; dim], vec![GRID_PER_AXIS; dim])
}

fn grid_points(g: &GridGeometry) -> DMatrix<f64> {
    let n = g.len();
    let mut x = DMatrix::zeros(n, g.dim());
    for i in 0..n {
        for (d, v) in g.point(i).into_iter().enumerate() {
            x[(i, d)] = v;
        }
    }
    x
}

/// Factor of a gram matrix, built in place; jitter grows until it succeeds.
fn factor_gram(k: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut jitter = 0.0;
    for rel in [0.0, 1e-10, 1e-8, 1e-6, 1e-4] {
        jitter = rel * k.scale;
        let mut a = k.gram(x)?;
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if linalg::try_cholesky_in_place(&mut a) {
            return Ok(a);
        }
    }
    Err(Error::NotPositiveDefinite { jitter })
}

/// Entries uniform on [-1, 1), then every row scaled to unit norm.
fn draw_w(rng: &mut ChaCha8Rng, t: usize) -> DMatrix<f64> {
    let mut w = DMatrix::from_fn(t, t, |_, _| rng.gen_range(-1.0..1.0));
    for mut row in w.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    w
}

impl MogpPrior {
    /// Draws lengthscales (uniform in `ls_range` per dimension) and mixing
    /// matrices, then factors the prior over a `100^dim` grid on `[-2, 2]^dim`.
    pub fn sample(dim: usize, n_tasks: usize, ls_range: (f64, f64), rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Input(format!("grid samples support 1 or 2 dimensions, got {dim}")));
        }
        if n_tasks < 1 {
            return Err(Error::Input("need at least one task".into()));
        }
        let grid = grid_geometry(dim)?;
        let x = grid_points(&grid);
        let mut lengthscales = Vec::new();
        let mut w = Vec::new();
        let mut l_k = Vec::new();
        let mut l_b = Vec::new();
        for _ in 0..N_LATENT {
            let ls: Vec<f64> = (0..dim).map(|_| rng.gen_range(ls_range.0..ls_range.1)).collect();
            let wl = draw_w(rng, n_tasks);
            let b = &wl * wl.transpose();
            // rank-deficient when rows are parallel; a tiny jitter keeps it SPD
            let (lb, _) = linalg::cholesky_with_jitter(&b).or_else(|_| {
                linalg::cholesky_with_jitter(&(b.clone() + DMatrix::identity(n_tasks, n_tasks) * 1e-10))
            })?;
            let k = KernelSpec::new(KernelFamily::Matern52, ls.clone(), 1.0)?;
            l_k.push(factor_gram(&k, &x)?);
            l_b.push(lb);
            lengthscales.push(ls);
            w.push(wl);
        }
        Ok(MogpPrior { grid, lengthscales, w, l_k, l_b })
    }

    pub fn n_tasks(&self) -> usize {
        self.l_b[0].nrows()
    }

    /// One joint draw over all tasks as an `n x T` matrix (column = task):
    /// `sum_l L(K_l) U_l L(B_l)^T`, the reshaped form of
    /// `(L(B_l) (x) L(K_l)) vec(U_l)`.
    pub fn draw_raw(&self, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let n = self.grid.len();
        let t = self.n_tasks();
        let mut f = DMatrix::zeros(n, t);
        for (lk, lb) in self.l_k.iter().zip(&self.l_b) {
            let u = DMatrix::from_fn(n, t, |_, _| {
                let v: f64 = rng.sample(StandardNormal);
                v
            });
            let ku = lk * u;
            f.gemm(1.0, &ku, &lb.transpose(), 1.0);
        }
        f
    }

    /// Independent draws for each output channel, normalised per column and
    /// regrouped per task: entry `t` holds every output of task `t`.
    pub fn draw_tasks(&self, n_outputs: usize, rng: &mut ChaCha8Rng) -> (Vec<GridFunction>, Vec<Vec<(f64, f64)>>) {
        let t = self.n_tasks();
        let mut per_task: Vec<Vec<Vec<f64>>> = vec![Vec::new(); t];
        let mut stats: Vec<Vec<(f64, f64)>> = vec![Vec::new(); t];
        for _ in 0..n_outputs {
            let f = self.draw_raw(rng);
            for (task, col) in f.column_iter().enumerate() {
                let mut v: Vec<f64> = col.iter().copied().collect();
                stats[task].push(normalize(&mut v));
                per_task[task].push(v);
            }
        }
        let tasks = per_task
            .into_iter()
            .map(|outputs| GridFunction::new(self.grid.clone(), outputs).expect("grid sizes agree"))
            .collect();
        (tasks, stats)
    }

    pub fn metadata(&self, normalization: Vec<Vec<(f64, f64)>>) -> MogpMetadata {
        MogpMetadata {
            lengthscales: self.lengthscales.clone(),
            w: self.w.iter().map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect()).collect(),
            normalization,
        }
    }
}

/// Shifts and scales to mean 0 and (population) variance 1, returning the
/// removed mean and standard deviation.
pub fn normalize(v: &mut [f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
    // second pass removes the rounding left by the first
    let m2 = v.iter().sum::<f64>() / n;
    let s2 = (v.iter().map(|x| (x - m2).powi(2)).sum::<f64>() / n).sqrt();
    let s2 = if s2 > 0.0 { s2 } else { 1.0 };
    for x in v.iter_mut() {
        *x = (*x - m2) / s2;
    }
    (mean + m2 * sd, sd * s2)
}

/// Source and target grid functions from a two-task prior, each with
/// `n_outputs` channels (main output first, then safety outputs).
pub fn sample_mogp_functions(
    dim: usize,
    seed: u64,
    ls_range: (f64, f64),
    n_outputs: usize,
) -> Result<(GridFunction, GridFunction, MogpMetadata)> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = MogpPrior::sample(dim, 2, ls_range, &mut rng)?;
    let (mut tasks, stats) = prior.draw_tasks(n_outputs, &mut rng);
    let target = tasks.pop().expect("two tasks");
    let source = tasks.pop().expect("two tasks");
    Ok((source, target, prior.metadata(stats)))
}
