use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use super::params::{bounds, draw, gradient, pack, unpack};
use super::{hgp_parts, MultiTaskData, SourceCache, TransferModel, LN_2PI};
use crate::error::{Error, Result};
use crate::gp::grad::component_grads;
use crate::gp::{
    gradient_weights, input_span, lengthscale_init_range, log_uniform, solve_gaussian, FitOptions, GpModel, Solved,
    NOISE_INIT, SCALE_INIT,
};
use crate::kernels::multitask::components_matrix;
use crate::kernels::{Component, KernelSpec, MultiTaskKernel};
use crate::linalg;
use crate::optim::multi_start;

fn lml_grad_full(m: &TransferModel, data: &MultiTaskData) -> Result<(f64, Vec<f64>)> {
    let omega = m.joint_covariance_data(data)?;
    let s: Solved = solve_gaussian(&omega, &data.y)?;
    let w = gradient_weights(&s);
    Ok((s.lml, gradient(m, data, &w)))
}

impl TransferModel {
    /// Joint LML and its gradient with respect to all parameters (see the
    /// layout in `params`). Always computed without the cache.
    pub fn lml_with_gradient(&self, data: &MultiTaskData) -> Result<(f64, Vec<f64>)> {
        self.check(data)?;
        lml_grad_full(self, data)
    }

    pub fn log_params(&self) -> Vec<f64> {
        pack(self)
    }

    pub fn with_log_params(&self, p: &[f64]) -> Result<TransferModel> {
        if p.len() != pack(self).len() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", pack(self).len(), p.len())));
        }
        unpack(self, p)
    }
}

/// Fits every kernel parameter and noise jointly on source and target data.
/// Any attached source cache is dropped.
pub fn fit_full(model: &TransferModel, data: &MultiTaskData, opts: &FitOptions) -> Result<TransferModel> {
    let mut model = model.clone();
    model.source_cache = None;
    model.check(data)?;
    if data.len() < 2 {
        return Err(Error::Input("fitting needs at least two points".into()));
    }
    let (mut lo, mut hi) = bounds(&model, &opts.bounds);
    let cur = pack(&model);
    let t = model.kernel.n_tasks();
    if opts.fix_noise {
        let n = lo.len();
        lo[n - t..].copy_from_slice(&cur[n - t..]);
        hi[n - t..].copy_from_slice(&cur[n - t..]);
    }
    let span = input_span(&data.x);
    let objective = |p: &[f64]| {
        let m = unpack(&model, p).ok()?;
        let (v, g) = lml_grad_full(&m, data).ok()?;
        Some((-v, g.into_iter().map(|x| -x).collect()))
    };
    let drawer = |rng: &mut ChaCha8Rng| {
        let mut p = draw(&model, &span, &opts.bounds, rng);
        if opts.fix_noise {
            let n = p.len();
            p[n - t..].copy_from_slice(&cur[n - t..]);
        }
        p
    };
    let first = opts.warm_start.then(|| cur.clone());
    let best = multi_start(objective, first, opts.restarts, opts.seed, drawer, &lo, &hi, &opts.lbfgs);
    let before = model.log_marginal_likelihood(data).ok();
    match (best, before) {
        (Some(m), Some(lb)) if -m.f < lb => Ok(model),
        (Some(m), _) => unpack(&model, &m.x),
        (None, Some(_)) => Ok(model),
        (None, None) => Err(Error::Fit("no start produced a finite likelihood".into())),
    }
}

/// Fits the source-side parameters of an HGP on source data only, freezes
/// them and attaches the factor of the source block. Rows of the target task
/// in `data` are ignored.
pub fn precompute_source(model: &TransferModel, data: &MultiTaskData, opts: &FitOptions) -> Result<TransferModel> {
    let (src, tk) = hgp_parts(&model.kernel)?;
    model.check(data)?;
    let (sx, stasks, sy, _, _) = data.split();
    if sy.is_empty() {
        return Err(Error::Input("source precomputation needs source data".into()));
    }
    let p = src.len();
    let (new_src, new_noise) = if p == 1 {
        // the source marginal of a one-source HGP is a single-task GP
        let gp = GpModel::new(src[0].clone(), model.source_noise[0])?.fit(&sx, &sy, opts)?;
        (vec![gp.kernel.clone()], vec![gp.noise_variance])
    } else {
        let sub = TransferModel::new(
            MultiTaskKernel::hgp(src[..p - 1].to_vec(), src[p - 1].clone())?,
            model.source_noise[..p - 1].to_vec(),
            model.source_noise[p - 1],
        )?;
        let sub_data = MultiTaskData { x: sx.clone(), tasks: stasks.clone(), y: sy.clone(), n_sources: p - 1 };
        let fitted = fit_full(&sub, &sub_data, opts)?;
        let (ks, kt) = hgp_parts(&fitted.kernel)?;
        let mut all = ks.to_vec();
        all.push(kt.clone());
        let mut noise = fitted.source_noise.clone();
        noise.push(fitted.target_noise);
        (all, noise)
    };
    let mut out = TransferModel::new(MultiTaskKernel::hgp(new_src, tk.clone())?, new_noise, model.target_noise)?;
    out.source_cache = Some(Arc::new(SourceCache::build(&out, sx, stasks, sy)?));
    Ok(out)
}

/// Fixed pieces of the target-given-source objective.
struct FrozenSource {
    xt: DMatrix<f64>,
    /// Target block contributed by the frozen source kernels, minus `V^T V`.
    fixed: DMatrix<f64>,
    /// `y_t - V^T L_s^{-1} y_s`.
    resid: DVector<f64>,
    /// Source part of the LML that does not depend on target parameters.
    source_lml: f64,
    n_target: usize,
}

impl FrozenSource {
    fn new(model: &TransferModel, cache: &SourceCache, data: &MultiTaskData) -> Result<Self> {
        let (src, _) = hgp_parts(&model.kernel)?;
        let p = src.len();
        let (_, _, _, xt, yt) = data.split();
        let n = xt.nrows();
        let tt = vec![p; n];
        let comps = model.kernel.components();
        let source_comps: Vec<Component> = comps[..p].to_vec();
        let mut v = components_matrix(&source_comps, &cache.source_x, &cache.source_tasks, &xt, &tt)?;
        linalg::solve_lower_in_place(&cache.l_source, &mut v);
        let mut fixed = components_matrix(&source_comps, &xt, &tt, &xt, &tt)?;
        fixed.gemm_tr(-1.0, &v, &v, 1.0);
        let resid = yt - v.tr_mul(&cache.z_source);
        let source_lml = -0.5 * cache.z_source.norm_squared() - 0.5 * linalg::chol_logdet(&cache.l_source)
            - 0.5 * cache.len() as f64 * LN_2PI;
        Ok(FrozenSource { xt, fixed, resid, source_lml, n_target: n })
    }

    /// LML and gradient over `[log l_t, log scale_t, log noise_t]`.
    fn lml_grad(&self, kt: &KernelSpec, noise: f64) -> Result<(f64, Vec<f64>)> {
        let mut s = kt.gram(&self.xt)?;
        s += &self.fixed;
        for i in 0..self.n_target {
            s[(i, i)] += noise;
        }
        let solved = solve_gaussian(&s, &self.resid)?;
        let lml = self.source_lml + solved.lml;
        let w = gradient_weights(&solved);
        let one = DMatrix::from_element(1, 1, 1.0);
        let comps = [Component { b: one.clone(), kernel: kt.clone() }];
        let cg = component_grads(&comps, &self.xt, &vec![0; self.n_target], &w);
        let mut g = cg.lengthscale[0].clone();
        g.push(cg.log_scale(0, &one));
        g.push(0.5 * noise * w.trace());
        Ok((lml, g))
    }
}

/// Fits the target residual kernel and target noise with the source block
/// frozen; each objective evaluation reuses the cached source factor.
pub fn fit_target_given_source(model: &TransferModel, data: &MultiTaskData, opts: &FitOptions) -> Result<TransferModel> {
    let cache = model
        .source_cache
        .clone()
        .ok_or_else(|| Error::Config("target-only fitting requires a source cache".into()))?;
    model.check(data)?;
    model.check_cache(&cache, data)?;
    let (src, kt) = hgp_parts(&model.kernel)?;
    let frozen = FrozenSource::new(model, &cache, data)?;
    if frozen.n_target == 0 {
        return Ok(model.clone());
    }
    let d = kt.dim();
    let b = &opts.bounds;
    let mut lo: Vec<f64> = vec![b.lengthscale.0.ln(); d];
    let mut hi: Vec<f64> = vec![b.lengthscale.1.ln(); d];
    lo.push(b.scale.0.ln());
    hi.push(b.scale.1.ln());
    let cur: Vec<f64> = kt.lengthscales.iter().map(|l| l.ln()).chain([kt.scale.ln(), model.target_noise.ln()]).collect();
    if opts.fix_noise {
        lo.push(cur[d + 1]);
        hi.push(cur[d + 1]);
    } else {
        lo.push(b.noise.0.ln());
        hi.push(b.noise.1.ln());
    }
    let family = kt.family;
    let objective = |p: &[f64]| {
        let k = KernelSpec::new(family, p[..d].iter().map(|v| v.exp()).collect(), p[d].exp()).ok()?;
        let (v, g) = frozen.lml_grad(&k, p[d + 1].exp()).ok()?;
        Some((-v, g.into_iter().map(|x| -x).collect()))
    };
    let span = input_span(&data.x);
    let drawer = |rng: &mut ChaCha8Rng| {
        let mut p: Vec<f64> = span
            .iter()
            .map(|s| {
                let (a, c) = lengthscale_init_range(*s, b);
                log_uniform(rng, a, c)
            })
            .collect();
        p.push(log_uniform(rng, SCALE_INIT.0, SCALE_INIT.1));
        p.push(if opts.fix_noise { cur[d + 1] } else { log_uniform(rng, NOISE_INIT.0, NOISE_INIT.1) });
        p
    };
    let first = opts.warm_start.then(|| cur.clone());
    let best = multi_start(objective, first, opts.restarts, opts.seed, drawer, &lo, &hi, &opts.lbfgs);
    let before = frozen.lml_grad(kt, model.target_noise).ok().map(|r| r.0);
    let chosen = match (best, before) {
        (Some(m), Some(lb)) if -m.f < lb => cur,
        (Some(m), _) => m.x,
        (None, Some(_)) => cur,
        (None, None) => return Err(Error::Fit("no start produced a finite likelihood".into())),
    };
    let kt_new = KernelSpec::new(family, chosen[..d].iter().map(|v| v.exp()).collect(), chosen[d].exp())?;
    let mut out = TransferModel::new(MultiTaskKernel::hgp(src.to_vec(), kt_new)?, model.source_noise.clone(), chosen[d + 1].exp())?;
    out.source_cache = Some(cache);
    Ok(out)
}

/// LML of the target-given-source objective at the model's current
/// parameters, evaluated through the cached source factor.
pub(crate) fn cached_lml(model: &TransferModel, data: &MultiTaskData) -> Result<f64> {
    let cache = model
        .source_cache
        .clone()
        .ok_or_else(|| Error::Config("no source cache attached".into()))?;
    model.check_cache(&cache, data)?;
    let (_, kt) = hgp_parts(&model.kernel)?;
    Ok(FrozenSource::new(model, &cache, data)?.lml_grad(kt, model.target_noise)?.0)
}

impl TransferModel {
    /// Joint LML through the cached source factor; requires a cache.
    pub fn cached_log_marginal_likelihood(&self, data: &MultiTaskData) -> Result<f64> {
        cached_lml(self, data)
    }
}

impl TransferModel {
    /// Attaches a source cache at the current parameters without fitting.
    pub fn with_source_cache(&self, data: &MultiTaskData) -> Result<TransferModel> {
        hgp_parts(&self.kernel)?;
        self.check(data)?;
        let (sx, stasks, sy, _, _) = data.split();
        let mut out = self.clone();
        out.source_cache = None;
        out.source_cache = Some(Arc::new(SourceCache::build(&out, sx, stasks, sy)?));
        Ok(out)
    }
}
