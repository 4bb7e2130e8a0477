//! Multi-output GP inference over source and target tasks, the two-step block
//! Cholesky used with a frozen source block, and transfer-model fitting.

mod fit;
mod params;

pub use fit::{fit_full, fit_target_given_source, precompute_source};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::LabeledDataset;
use crate::kernels::{multitask::components_matrix, Component, KernelSpec, MultiTaskKernel};
use crate::linalg;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stacked inputs, task indices and one output channel of all tasks; sources
/// come first in their declared order, the target last.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskData {
    pub x: DMatrix<f64>,
    pub tasks: Vec<usize>,
    pub y: DVector<f64>,
    pub n_sources: usize,
}

impl MultiTaskData {
    pub fn new(sources: &[(&DMatrix<f64>, &DVector<f64>)], target: (&DMatrix<f64>, &DVector<f64>)) -> Result<Self> {
        let dim = target.0.ncols();
        let mut rows: Vec<(usize, &DMatrix<f64>, &DVector<f64>)> =
            sources.iter().enumerate().map(|(p, (x, y))| (p, *x, *y)).collect();
        rows.push((sources.len(), target.0, target.1));
        let n: usize = rows.iter().map(|r| r.1.nrows()).sum();
        let mut x = DMatrix::zeros(n, dim);
        let mut y = DVector::zeros(n);
        let mut tasks = Vec::with_capacity(n);
        let mut at = 0;
        for (task, xs, ys) in rows {
            if xs.ncols() != dim && xs.nrows() > 0 {
                return Err(Error::Dimension(format!("task {task} has {} input columns, expected {dim}", xs.ncols())));
            }
            if xs.nrows() != ys.len() {
                return Err(Error::Dimension(format!("task {task}: {} inputs, {} targets", xs.nrows(), ys.len())));
            }
            for i in 0..xs.nrows() {
                x.row_mut(at).copy_from(&xs.row(i));
                y[at] = ys[i];
                tasks.push(task);
                at += 1;
            }
        }
        Ok(MultiTaskData { x, tasks, y, n_sources: sources.len() })
    }

    /// Output channel `g` of labelled datasets (0 main, `j` safety `j`).
    pub fn from_datasets(sources: &[LabeledDataset], target: &LabeledDataset, g: usize) -> Result<Self> {
        let ys: Vec<DVector<f64>> = sources.iter().map(|s| s.output(g)).collect();
        let parts: Vec<(&DMatrix<f64>, &DVector<f64>)> = sources.iter().zip(&ys).map(|(s, y)| (&s.x, y)).collect();
        let yt = target.output(g);
        Self::new(&parts, (&target.x, &yt))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_source_points(&self) -> usize {
        self.tasks.iter().filter(|t| **t < self.n_sources).count()
    }

    fn split(&self) -> (DMatrix<f64>, Vec<usize>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let ns = self.n_source_points();
        debug_assert!(self.tasks[..ns].iter().all(|t| *t < self.n_sources));
        let nt = self.len() - ns;
        (
            self.x.rows(0, ns).into_owned(),
            self.tasks[..ns].to_vec(),
            self.y.rows(0, ns).into_owned(),
            self.x.rows(ns, nt).into_owned(),
            self.y.rows(ns, nt).into_owned(),
        )
    }
}

/// Frozen source block of one output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCache {
    /// Source kernel terms in force when the cache was built.
    pub frozen_kernels: Vec<KernelSpec>,
    pub frozen_noise: Vec<f64>,
    pub source_x: DMatrix<f64>,
    pub source_tasks: Vec<usize>,
    pub source_y: DVector<f64>,
    /// Lower factor of the source covariance including noise.
    pub l_source: DMatrix<f64>,
    /// `L_source^{-1} y_source`.
    pub z_source: DVector<f64>,
}

impl SourceCache {
    pub(crate) fn build(model: &TransferModel, x: DMatrix<f64>, tasks: Vec<usize>, y: DVector<f64>) -> Result<Self> {
        let comps = model.kernel.components();
        let mut k = components_matrix(&comps, &x, &tasks, &x, &tasks)?;
        for (i, t) in tasks.iter().enumerate() {
            k[(i, i)] += model.source_noise[*t];
        }
        let l_source = linalg::cholesky_spd(&k)?;
        let z_source = linalg::solve_lower_vec(&l_source, &y);
        let (frozen_kernels, _) = hgp_parts(&model.kernel)?;
        Ok(SourceCache {
            frozen_kernels: frozen_kernels.to_vec(),
            frozen_noise: model.source_noise.clone(),
            source_x: x,
            source_tasks: tasks,
            source_y: y,
            l_source,
            z_source,
        })
    }

    pub fn len(&self) -> usize {
        self.source_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_y.is_empty()
    }

    /// `L_source^{-1} k(source, test)` for target-task test points. The model
    /// must be the one the cache belongs to.
    pub fn solve_test(&self, model: &TransferModel, test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = model.kernel.n_sources();
        let mut k = components_matrix(&model.kernel.components(), &self.source_x, &self.source_tasks, test, &vec![p; test.nrows()])?;
        linalg::solve_lower_in_place(&self.l_source, &mut k);
        Ok(k)
    }
}

pub(crate) fn hgp_parts(k: &MultiTaskKernel) -> Result<(&[KernelSpec], &KernelSpec)> {
    match k {
        MultiTaskKernel::Hgp { source_kernels, target_kernel } => Ok((source_kernels, target_kernel)),
        MultiTaskKernel::Lmc { .. } => Err(Error::Config(
            "source precomputation is unsupported for LMC kernels (unsupported combination)".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferModel {
    pub kernel: MultiTaskKernel,
    pub source_noise: Vec<f64>,
    pub target_noise: f64,
    pub source_cache: Option<Arc<SourceCache>>,
}

impl TransferModel {
    pub fn new(kernel: MultiTaskKernel, source_noise: Vec<f64>, target_noise: f64) -> Result<Self> {
        if source_noise.len() != kernel.n_sources() {
            return Err(Error::Input(format!(
                "{} source noises for {} sources",
                source_noise.len(),
                kernel.n_sources()
            )));
        }
        if source_noise.iter().chain([&target_noise]).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Input("noise variances must be positive".into()));
        }
        Ok(TransferModel { kernel, source_noise, target_noise, source_cache: None })
    }

    pub fn n_sources(&self) -> usize {
        self.kernel.n_sources()
    }

    pub fn noise(&self, task: usize) -> f64 {
        if task < self.source_noise.len() {
            self.source_noise[task]
        } else {
            self.target_noise
        }
    }

    /// Prior variance of the target task.
    pub fn target_prior_variance(&self) -> f64 {
        let t = self.n_sources();
        self.kernel.components().iter().map(|c| c.b[(t, t)] * c.kernel.scale).sum()
    }

    fn check(&self, data: &MultiTaskData) -> Result<()> {
        if data.n_sources != self.n_sources() {
            return Err(Error::Dimension(format!(
                "data has {} sources, model {}",
                data.n_sources,
                self.n_sources()
            )));
        }
        if data.x.ncols() != self.kernel.dim() {
            return Err(Error::Dimension(format!(
                "inputs have {} columns, kernel {}",
                data.x.ncols(),
                self.kernel.dim()
            )));
        }
        Ok(())
    }

    pub fn joint_covariance_data(&self, data: &MultiTaskData) -> Result<DMatrix<f64>> {
        self.check(data)?;
        let mut k = self.kernel.matrix(&data.x, &data.tasks, &data.x, &data.tasks)?;
        for (i, t) in data.tasks.iter().enumerate() {
            k[(i, i)] += self.noise(*t);
        }
        Ok(k)
    }

    /// Block covariance with noise, ordered sources `1..P` then target.
    pub fn joint_covariance(&self, source_x: &[DMatrix<f64>], target_x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let ys: Vec<DVector<f64>> = source_x.iter().map(|x| DVector::zeros(x.nrows())).collect();
        let parts: Vec<_> = source_x.iter().zip(&ys).collect();
        let yt = DVector::zeros(target_x.nrows());
        let data = MultiTaskData::new(&parts, (target_x, &yt))?;
        self.joint_covariance_data(&data)
    }

    /// Joint log marginal likelihood computed from scratch (no cache).
    pub fn log_marginal_likelihood(&self, data: &MultiTaskData) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Input("log marginal likelihood needs data".into()));
        }
        let omega = self.joint_covariance_data(data)?;
        let l = linalg::cholesky_spd(&omega)?;
        let z = linalg::solve_lower_vec(&l, &data.y);
        Ok(-0.5 * z.norm_squared() - 0.5 * linalg::chol_logdet(&l) - 0.5 * data.len() as f64 * LN_2PI)
    }

    fn check_cache(&self, cache: &SourceCache, data: &MultiTaskData) -> Result<()> {
        let (src, _) = hgp_parts(&self.kernel)?;
        let ns = data.n_source_points();
        if src != cache.frozen_kernels.as_slice() || self.source_noise != cache.frozen_noise {
            return Err(Error::Config("source parameters differ from the cached ones".into()));
        }
        if ns != cache.len()
            || data.x.rows(0, ns) != cache.source_x
            || data.tasks[..ns] != cache.source_tasks[..]
            || data.y.rows(0, ns) != cache.source_y
        {
            return Err(Error::Config("source data differ from the cached ones".into()));
        }
        Ok(())
    }

    /// Factorises the joint covariance; reuses the source factor when a cache
    /// is attached.
    pub fn condition(&self, data: &MultiTaskData) -> Result<ConditionedTransfer> {
        self.check(data)?;
        let comps = self.kernel.components();
        let factor = match &self.source_cache {
            Some(cache) => {
                self.check_cache(cache, data)?;
                let (_, _, _, xt, yt) = data.split();
                let p = self.n_sources();
                let tt = vec![p; xt.nrows()];
                let k_cross = components_matrix(&comps, &cache.source_x, &cache.source_tasks, &xt, &tt)?;
                let mut k_t = components_matrix(&comps, &xt, &tt, &xt, &tt)?;
                for i in 0..xt.nrows() {
                    k_t[(i, i)] += self.target_noise;
                }
                let ts = TwoStep::new(&cache.l_source, &k_cross, &k_t)?;
                let z_t = linalg::solve_lower_vec(&ts.l_schur, &(yt - ts.v.tr_mul(&cache.z_source)));
                Factor::TwoStep { cache: cache.clone(), v: ts.v, l_schur: ts.l_schur, z_t }
            }
            None => {
                let omega = self.joint_covariance_data(data)?;
                let l = linalg::cholesky_spd(&omega)?;
                let z = linalg::solve_lower_vec(&l, &data.y);
                Factor::Direct { l, z }
            }
        };
        Ok(ConditionedTransfer {
            prior_var: self.target_prior_variance(),
            target_noise: self.target_noise,
            n_sources: self.n_sources(),
            comps,
            x: data.x.clone(),
            tasks: data.tasks.clone(),
            factor,
        })
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Direct { l: DMatrix<f64>, z: DVector<f64> },
    TwoStep { cache: Arc<SourceCache>, v: DMatrix<f64>, l_schur: DMatrix<f64>, z_t: DVector<f64> },
}

/// A transfer model bound to its training data, ready for prediction.
#[derive(Debug, Clone)]
pub struct ConditionedTransfer {
    prior_var: f64,
    target_noise: f64,
    n_sources: usize,
    comps: Vec<Component>,
    x: DMatrix<f64>,
    tasks: Vec<usize>,
    factor: Factor,
}

impl ConditionedTransfer {
    pub fn target_noise(&self) -> f64 {
        self.target_noise
    }

    pub fn uses_source_cache(&self) -> bool {
        matches!(self.factor, Factor::TwoStep { .. })
    }

    /// Predictive mean and latent variance of the target task.
    pub fn predict(&self, test: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.predict_inner(test, None)
    }

    /// As [`predict`](Self::predict) with `L_source^{-1} k(source, test)`
    /// supplied (see [`SourceCache::solve_test`]). Ignored on the direct path.
    pub fn predict_with_source_solve(&self, test: &DMatrix<f64>, ws: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.predict_inner(test, Some(ws))
    }

    fn predict_inner(&self, test: &DMatrix<f64>, ws: Option<&DMatrix<f64>>) -> Result<(DVector<f64>, DVector<f64>)> {
        let m = test.nrows();
        let tt = vec![self.n_sources; m];
        let (mean, sq) = match &self.factor {
            Factor::Direct { l, z } => {
                let mut w = components_matrix(&self.comps, &self.x, &self.tasks, test, &tt)?;
                linalg::solve_lower_in_place(l, &mut w);
                (w.tr_mul(z), DVector::from_fn(m, |j, _| w.column(j).norm_squared()))
            }
            Factor::TwoStep { cache, v, l_schur, z_t } => {
                let ns = cache.len();
                let xt = self.x.rows(ns, self.x.nrows() - ns).into_owned();
                let ws = match ws {
                    Some(w) => {
                        if w.shape() != (ns, m) {
                            return Err(Error::Dimension("source solve does not match the test set".into()));
                        }
                        w.clone()
                    }
                    None => {
                        let mut k = components_matrix(&self.comps, &cache.source_x, &cache.source_tasks, test, &tt)?;
                        linalg::solve_lower_in_place(&cache.l_source, &mut k);
                        k
                    }
                };
                let mut wt = components_matrix(&self.comps, &xt, &vec![self.n_sources; xt.nrows()], test, &tt)?;
                wt.gemm_tr(-1.0, v, &ws, 1.0);
                linalg::solve_lower_in_place(l_schur, &mut wt);
                let mean = ws.tr_mul(&cache.z_source) + wt.tr_mul(z_t);
                let sq = DVector::from_fn(m, |j, _| ws.column(j).norm_squared() + wt.column(j).norm_squared());
                (mean, sq)
            }
        };
        let var = sq.map(|s| (self.prior_var - s).max(0.0));
        Ok((mean, var))
    }
}

/// Pieces of the two-step factorisation: `V = L_s^{-1} K_cross` and the
/// factor of the Schur complement `K_t - V^T V`.
pub struct TwoStep {
    pub v: DMatrix<f64>,
    pub l_schur: DMatrix<f64>,
}

impl TwoStep {
    pub fn new(l_source: &DMatrix<f64>, k_cross: &DMatrix<f64>, k_target: &DMatrix<f64>) -> Result<Self> {
        let v = linalg::solve_lower(l_source, k_cross);
        Self::from_solved(v, k_target)
    }

    pub fn from_solved(v: DMatrix<f64>, k_target: &DMatrix<f64>) -> Result<Self> {
        let mut s = k_target.clone();
        s.gemm_tr(-1.0, &v, &v, 1.0);
        let s = (&s + s.transpose()) * 0.5;
        let l_schur = linalg::cholesky_spd(&s)?;
        Ok(TwoStep { v, l_schur })
    }

    pub fn assemble(&self, l_source: &DMatrix<f64>) -> DMatrix<f64> {
        let (ns, n) = (l_source.nrows(), self.l_schur.nrows());
        let mut l = DMatrix::zeros(ns + n, ns + n);
        l.view_mut((0, 0), (ns, ns)).copy_from(l_source);
        l.view_mut((ns, 0), (n, ns)).copy_from(&self.v.transpose());
        l.view_mut((ns, ns), (n, n)).copy_from(&self.l_schur);
        l
    }
}

/// Lower factor of `[[A, K_cross], [K_cross^T, K_target]]` given `L(A)`.
pub fn two_step_cholesky(l_source: &DMatrix<f64>, k_cross: &DMatrix<f64>, k_target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if l_source.nrows() != k_cross.nrows() || k_cross.ncols() != k_target.nrows() || !k_target.is_square() {
        return Err(Error::Dimension("blocks are not conformable".into()));
    }
    Ok(TwoStep::new(l_source, k_cross, k_target)?.assemble(l_source))
}

/// Target-task posterior of `model` given all task data.
pub fn transfer_posterior(
    model: &TransferModel,
    sources: &[LabeledDataset],
    target: &LabeledDataset,
    channel: usize,
    test: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let data = MultiTaskData::from_datasets(sources, target, channel)?;
    model.condition(&data)?.predict(test)
}

#[cfg(test)]
mod tests;
