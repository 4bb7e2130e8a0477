//! Single-task GP regression: Cholesky-backed posterior, log marginal
//! likelihood with analytic gradients, and multi-start type-II ML fitting.

mod dataset;
pub(crate) mod grad;

pub use dataset::LabeledDataset;
pub use crate::linalg::cholesky_spd;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Component, KernelSpec};
use crate::linalg;
use crate::optim::{multi_start, LbfgsOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lengthscale: (f64, f64),
    pub scale: (f64, f64),
    pub noise: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { lengthscale: (1e-3, 1e3), scale: (1e-3, 1e3), noise: (1e-6, 1e1) }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Total optimiser starts, including the warm start when enabled.
    pub restarts: usize,
    /// Use the incoming parameters as the first start.
    pub warm_start: bool,
    pub seed: u64,
    pub bounds: Bounds,
    pub fix_scale: bool,
    pub fix_noise: bool,
    pub lbfgs: LbfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 5,
            warm_start: true,
            seed: 0,
            bounds: Bounds::default(),
            fix_scale: false,
            fix_noise: false,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

/// Per-dimension extent of the inputs, used to place random restarts.
pub(crate) fn input_span(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols())
        .map(|d| {
            let c = x.column(d);
            let s = c.max() - c.min();
            if s.is_finite() && s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect()
}

pub(crate) fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo.ln();
    }
    rng.gen_range(lo.ln()..hi.ln())
}

/// Range for random lengthscale starts in dimension with extent `span`.
pub(crate) fn lengthscale_init_range(span: f64, b: &Bounds) -> (f64, f64) {
    let lo = (0.05 * span).clamp(b.lengthscale.0, b.lengthscale.1);
    let hi = (span).clamp(b.lengthscale.0, b.lengthscale.1);
    (lo, hi.max(lo))
}

pub(crate) const SCALE_INIT: (f64, f64) = (0.2, 5.0);
pub(crate) const NOISE_INIT: (f64, f64) = (1e-4, 0.1);

/// Factorisation of `Omega` and the weights `Omega^{-1} y`.
pub(crate) struct Solved {
    pub l: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub lml: f64,
}

pub(crate) fn solve_gaussian(omega: &DMatrix<f64>, y: &DVector<f64>) -> Result<Solved> {
    let l = linalg::cholesky_spd(omega)?;
    let alpha = linalg::chol_solve_vec(&l, y);
    let lml = -0.5 * y.dot(&alpha) - 0.5 * linalg::chol_logdet(&l) - 0.5 * y.len() as f64 * LN_2PI;
    Ok(Solved { l, alpha, lml })
}

/// `alpha alpha^T - Omega^{-1}`, the matrix contracted against `dOmega`.
pub(crate) fn gradient_weights(s: &Solved) -> DMatrix<f64> {
    let mut w = linalg::chol_inverse(&s.l);
    w.neg_mut();
    w.ger(1.0, &s.alpha, &s.alpha, 1.0);
    w
}

#[derive(Debug, Clone)]
struct GpCache {
    x: DMatrix<f64>,
    l: DMatrix<f64>,
    alpha: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    cache: Option<GpCache>,
}

impl GpModel {
    pub fn new(kernel: KernelSpec, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::Input(format!("noise variance must be positive, got {noise_variance}")));
        }
        Ok(GpModel { kernel, noise_variance, cache: None })
    }

    pub fn is_conditioned(&self) -> bool {
        self.cache.is_some()
    }

    fn check_data(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
        self.kernel.check_inputs(x)?;
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!("{} inputs but {} targets", x.nrows(), y.len())));
        }
        Ok(())
    }

    fn covariance(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut k = self.kernel.gram(x)?;
        for i in 0..k.nrows() {
            k[(i, i)] += self.noise_variance;
        }
        Ok(k)
    }

    /// Returns a copy carrying the training factorisation for `(x, y)`.
    pub fn condition(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<GpModel> {
        self.check_data(x, y)?;
        let s = solve_gaussian(&self.covariance(x)?, y)?;
        Ok(GpModel {
            kernel: self.kernel.clone(),
            noise_variance: self.noise_variance,
            cache: Some(GpCache { x: x.clone(), l: s.l, alpha: s.alpha }),
        })
    }

    /// Predictive mean and latent variance at `test`. Without a cache this is
    /// the prior.
    pub fn predict(&self, test: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.kernel.check_inputs(test)?;
        let m = test.nrows();
        let Some(c) = &self.cache else {
            return Ok((DVector::zeros(m), DVector::from_element(m, self.kernel.scale)));
        };
        let mut ks = self.kernel.kernel_matrix(&c.x, test)?;
        let mean = ks.tr_mul(&c.alpha);
        linalg::solve_lower_in_place(&c.l, &mut ks);
        let var = DVector::from_fn(m, |j, _| {
            let v = ks.column(j).norm_squared();
            (self.kernel.scale - v).max(0.0)
        });
        Ok((mean, var))
    }

    pub fn posterior(&self, x: &DMatrix<f64>, y: &DVector<f64>, test: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.condition(x, y)?.predict(test)
    }

    pub fn log_marginal_likelihood(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check_data(x, y)?;
        if y.is_empty() {
            return Err(Error::Input("log marginal likelihood needs at least one point".into()));
        }
        Ok(solve_gaussian(&self.covariance(x)?, y)?.lml)
    }

    /// Parameters in optimiser coordinates: `[log l_1..l_D, log scale, log noise]`.
    pub fn log_params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.kernel.lengthscales.iter().map(|l| l.ln()).collect();
        p.push(self.kernel.scale.ln());
        p.push(self.noise_variance.ln());
        p
    }

    pub fn with_log_params(&self, p: &[f64]) -> Result<GpModel> {
        let d = self.kernel.dim();
        if p.len() != d + 2 {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", d + 2, p.len())));
        }
        let kernel = KernelSpec::new(self.kernel.family, p[..d].iter().map(|v| v.exp()).collect(), p[d].exp())?;
        GpModel::new(kernel, p[d + 1].exp())
    }

    /// Log marginal likelihood and its gradient with respect to `log_params`.
    pub fn lml_with_gradient(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
        self.check_data(x, y)?;
        if y.is_empty() {
            return Err(Error::Input("log marginal likelihood needs at least one point".into()));
        }
        let s = solve_gaussian(&self.covariance(x)?, y)?;
        let w = gradient_weights(&s);
        let one = DMatrix::from_element(1, 1, 1.0);
        let comps = [Component { b: one.clone(), kernel: self.kernel.clone() }];
        let tasks = vec![0; x.nrows()];
        let cg = grad::component_grads(&comps, x, &tasks, &w);
        let mut g = cg.lengthscale[0].clone();
        g.push(cg.log_scale(0, &one));
        g.push(0.5 * self.noise_variance * w.trace());
        Ok((s.lml, g))
    }

    /// Type-II maximum likelihood. Keeps the incoming parameters when no
    /// start improves on them.
    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>, opts: &FitOptions) -> Result<GpModel> {
        self.check_data(x, y)?;
        if y.len() < 2 {
            return Err(Error::Input("fitting needs at least two points".into()));
        }
        let d = self.kernel.dim();
        let b = &opts.bounds;
        let mut lo: Vec<f64> = vec![b.lengthscale.0.ln(); d];
        let mut hi: Vec<f64> = vec![b.lengthscale.1.ln(); d];
        let cur = self.log_params();
        if opts.fix_scale {
            lo.push(cur[d]);
            hi.push(cur[d]);
        } else {
            lo.push(b.scale.0.ln());
            hi.push(b.scale.1.ln());
        }
        if opts.fix_noise {
            lo.push(cur[d + 1]);
            hi.push(cur[d + 1]);
        } else {
            lo.push(b.noise.0.ln());
            hi.push(b.noise.1.ln());
        }
        let span = input_span(x);
        let draw = |rng: &mut ChaCha8Rng| {
            let mut p: Vec<f64> = span
                .iter()
                .map(|s| {
                    let (a, c) = lengthscale_init_range(*s, b);
                    log_uniform(rng, a, c)
                })
                .collect();
            p.push(if opts.fix_scale { cur[d] } else { log_uniform(rng, SCALE_INIT.0, SCALE_INIT.1) });
            p.push(if opts.fix_noise { cur[d + 1] } else { log_uniform(rng, NOISE_INIT.0, NOISE_INIT.1) });
            p
        };
        let objective = |p: &[f64]| {
            let m = self.with_log_params(p).ok()?;
            let (v, g) = m.lml_with_gradient(x, y).ok()?;
            Some((-v, g.into_iter().map(|t| -t).collect()))
        };
        let first = opts.warm_start.then(|| cur.clone());
        let best = multi_start(objective, first, opts.restarts, opts.seed, draw, &lo, &hi, &opts.lbfgs);
        let before = self.log_marginal_likelihood(x, y).ok();
        match (best, before) {
            (Some(m), Some(lb)) if -m.f < lb => self.condition(x, y),
            (Some(m), _) => self.with_log_params(&m.x)?.condition(x, y),
            (None, Some(_)) => self.condition(x, y),
            (None, None) => Err(Error::Fit("no start produced a finite likelihood".into())),
        }
    }
}

/// Convenience form of [`GpModel::posterior`].
pub fn posterior(model: &GpModel, x: &DMatrix<f64>, y: &DVector<f64>, test: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    model.posterior(x, y, test)
}

#[cfg(test)]
mod tests;
