use nalgebra::DMatrix;

use super::{LoopConfig, Method, OutputPrediction, SafetyParams};
use crate::datasets::Benchmark;
use crate::error::{Error, Result};
use crate::gp::{FitOptions, GpModel, LabeledDataset};
use crate::kernels::{KernelFamily, KernelSpec, MultiTaskKernel};
use crate::transfer::{
    fit_full, fit_target_given_source, precompute_source, ConditionedTransfer, MultiTaskData, TransferModel,
};

const INIT_NOISE_VARIANCE: f64 = 1e-3;
const INIT_LENGTHSCALE_FRACTION: f64 = 0.2;
const INIT_RESIDUAL_SCALE: f64 = 0.5;
const INIT_LMC_KAPPA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Inputs {
    Pool,
    Test,
}

/// One model per output (main, then safety outputs), or a single model when
/// the safety output is the main output.
pub(crate) trait Learner {
    fn update(&mut self, data: &LabeledDataset, iteration: usize, refit: bool) -> Result<()>;
    fn predict(&self, output: usize, on: Inputs) -> Result<OutputPrediction>;
    fn safety_params(&self) -> Vec<SafetyParams> {
        Vec::new()
    }
}

pub(crate) struct Outputs {
    pub shared: bool,
    pub n_safety: usize,
}

impl Outputs {
    pub fn n_models(&self) -> usize {
        if self.shared {
            1
        } else {
            1 + self.n_safety
        }
    }

    pub fn model_of(&self, output: usize) -> usize {
        if self.shared {
            0
        } else {
            output
        }
    }
}

fn fit_options(cfg: &LoopConfig, iteration: usize, model: usize) -> FitOptions {
    let mut o = cfg.fit.clone();
    o.seed = cfg.fit.seed.wrapping_add(cfg.seed.wrapping_mul(1_000_003)).wrapping_add((iteration * 16 + model) as u64);
    if iteration > 0 {
        o.restarts = cfg.refit_restarts;
    }
    o
}

fn init_lengthscales(b: &Benchmark) -> Vec<f64> {
    b.domain.lo.iter().zip(&b.domain.hi).map(|(l, h)| INIT_LENGTHSCALE_FRACTION * (h - l)).collect()
}

pub(crate) struct SingleTask {
    cfg: LoopConfig,
    outputs: Outputs,
    models: Vec<GpModel>,
    pool_x: DMatrix<f64>,
    test_x: DMatrix<f64>,
}

impl SingleTask {
    pub fn new(b: &Benchmark, cfg: &LoopConfig, test_x: DMatrix<f64>) -> Result<Self> {
        let outputs = Outputs { shared: b.target.safety_is_main(), n_safety: b.n_safety() };
        let k = KernelSpec::new(cfg.family, init_lengthscales(b), 1.0)?;
        let m = GpModel::new(k, INIT_NOISE_VARIANCE)?;
        Ok(SingleTask {
            cfg: cfg.clone(),
            models: vec![m; outputs.n_models()],
            outputs,
            pool_x: b.pool.x.clone(),
            test_x,
        })
    }
}

impl Learner for SingleTask {
    fn update(&mut self, data: &LabeledDataset, iteration: usize, refit: bool) -> Result<()> {
        for (m, model) in self.models.iter_mut().enumerate() {
            let y = data.output(m);
            *model = if refit && self.cfg.optimize {
                model.fit(&data.x, &y, &fit_options(&self.cfg, iteration, m))?
            } else {
                model.condition(&data.x, &y)?
            };
        }
        Ok(())
    }

    fn predict(&self, output: usize, on: Inputs) -> Result<OutputPrediction> {
        let m = &self.models[self.outputs.model_of(output)];
        let x = if on == Inputs::Pool { &self.pool_x } else { &self.test_x };
        let (mean, var) = m.predict(x)?;
        Ok(OutputPrediction { mean, var, noise_variance: m.noise_variance })
    }

    fn safety_params(&self) -> Vec<SafetyParams> {
        (1..=self.outputs.n_safety)
            .map(|g| {
                let m = &self.models[self.outputs.model_of(g)];
                SafetyParams {
                    lengthscales: m.kernel.lengthscales.clone(),
                    scale: m.kernel.scale,
                    noise_variance: m.noise_variance,
                }
            })
            .collect()
    }
}

fn initial_transfer_model(method: Method, family: KernelFamily, ls: &[f64], n_sources: usize) -> Result<TransferModel> {
    let kernel = match method {
        Method::FullHgp | Method::EffHgp => {
            let src = (0..n_sources).map(|_| KernelSpec::new(family, ls.to_vec(), 1.0)).collect::<Result<Vec<_>>>()?;
            MultiTaskKernel::hgp(src, KernelSpec::new(family, ls.to_vec(), INIT_RESIDUAL_SCALE)?)?
        }
        Method::FullLmc | Method::EffLmc => {
            let t = n_sources + 1;
            let latents = (0..t).map(|_| KernelSpec::new(family, ls.to_vec(), 1.0)).collect::<Result<Vec<_>>>()?;
            // first latent shared by all tasks, the rest start switched off
            let mut w = vec![vec![0.0; t]; t];
            w[0] = vec![1.0; t];
            MultiTaskKernel::lmc(latents, w, vec![INIT_LMC_KAPPA; t])?
        }
        Method::Sal => return Err(Error::Config("single-task method has no transfer kernel".into())),
    };
    TransferModel::new(kernel, vec![INIT_NOISE_VARIANCE; n_sources], INIT_NOISE_VARIANCE)
}

/// Transfer models refitted on the whole joint covariance, or, with
/// `modular`, source block fitted once and only the target part refitted.
pub(crate) struct Transfer {
    cfg: LoopConfig,
    outputs: Outputs,
    sources: Vec<LabeledDataset>,
    models: Vec<TransferModel>,
    conditioned: Vec<Option<ConditionedTransfer>>,
    /// Per model, source solves against the pool and the test points.
    solves: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    pool_x: DMatrix<f64>,
    test_x: DMatrix<f64>,
}

impl Transfer {
    pub fn new(b: &Benchmark, cfg: &LoopConfig, test_x: DMatrix<f64>, models: Option<Vec<TransferModel>>) -> Result<Self> {
        let outputs = Outputs { shared: b.target.safety_is_main(), n_safety: b.n_safety() };
        let models = match models {
            Some(m) if m.len() == outputs.n_models() => m,
            Some(m) => {
                return Err(Error::Config(format!("{} models given, {} needed", m.len(), outputs.n_models())));
            }
            None => {
                let m = initial_transfer_model(cfg.method, cfg.family, &init_lengthscales(b), b.sources.len())?;
                vec![m; outputs.n_models()]
            }
        };
        let mut t = Transfer {
            cfg: cfg.clone(),
            conditioned: vec![None; models.len()],
            models,
            outputs,
            sources: b.sources.clone(),
            solves: Vec::new(),
            pool_x: b.pool.x.clone(),
            test_x,
        };
        if cfg.method == Method::EffHgp {
            t.precompute(&b.initial)?;
        }
        Ok(t)
    }

    fn modular(&self) -> bool {
        self.cfg.method == Method::EffHgp
    }

    fn precompute(&mut self, initial: &LabeledDataset) -> Result<()> {
        for m in 0..self.models.len() {
            let data = MultiTaskData::from_datasets(&self.sources, initial, m)?;
            let model = if self.cfg.optimize {
                precompute_source(&self.models[m], &data, &fit_options(&self.cfg, 0, m))?
            } else {
                self.models[m].with_source_cache(&data)?
            };
            let cache = model.source_cache.clone().ok_or_else(|| Error::Fit("source cache missing".into()))?;
            self.solves.push((cache.solve_test(&model, &self.pool_x)?, cache.solve_test(&model, &self.test_x)?));
            self.models[m] = model;
        }
        Ok(())
    }
}

impl Learner for Transfer {
    fn update(&mut self, data: &LabeledDataset, iteration: usize, refit: bool) -> Result<()> {
        for m in 0..self.models.len() {
            let d = MultiTaskData::from_datasets(&self.sources, data, m)?;
            if refit && self.cfg.optimize {
                let opts = fit_options(&self.cfg, iteration, m);
                self.models[m] = if self.modular() {
                    fit_target_given_source(&self.models[m], &d, &opts)?
                } else {
                    fit_full(&self.models[m], &d, &opts)?
                };
            }
            self.conditioned[m] = Some(self.models[m].condition(&d)?);
        }
        Ok(())
    }

    fn predict(&self, output: usize, on: Inputs) -> Result<OutputPrediction> {
        let m = self.outputs.model_of(output);
        let c = self.conditioned[m].as_ref().ok_or_else(|| Error::Fit("model not conditioned".into()))?;
        let x = if on == Inputs::Pool { &self.pool_x } else { &self.test_x };
        let (mean, var) = match self.solves.get(m) {
            Some((wp, wt)) if c.uses_source_cache() => c.predict_with_source_solve(x, if on == Inputs::Pool { wp } else { wt })?,
            _ => c.predict(x)?,
        };
        Ok(OutputPrediction { mean, var, noise_variance: c.target_noise() })
    }
}
