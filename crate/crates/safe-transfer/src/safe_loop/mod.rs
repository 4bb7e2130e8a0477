//! Pool-based safe active learning, with and without source data.

mod driver;
mod learner;
mod pool;
mod posthoc;

pub use driver::{run, run_full_transfer, run_modular_transfer, run_sal};
pub use pool::Pool;
pub use posthoc::{check_exploration_bound, BoundCheck};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::FitOptions;
use crate::kernels::KernelFamily;
use crate::theory::{phi, phi_inv};

/// Variance floor inside the entropy acquisition.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// `beta` such that a point is safe when `P(q >= T) >= 1 - alpha`.
pub fn beta_from_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Input(format!("alpha must lie in (0, 0.5], got {alpha}")));
    }
    Ok(phi_inv(1.0 - alpha).powi(2))
}

pub fn alpha_from_beta(beta: f64) -> Result<f64> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Input(format!("beta must be finite and non-negative, got {beta}")));
    }
    Ok(1.0 - phi(beta.sqrt()))
}

/// Predictive mean and latent variance of one output over the pool.
#[derive(Debug, Clone)]
pub struct OutputPrediction {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    /// Observation noise variance of this output.
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeSet {
    /// Pool indices, ascending.
    pub members: Vec<usize>,
    pub beta: f64,
}

impl SafeSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }
}

/// Candidates whose every safety output satisfies
/// `mean - sqrt(beta) * sd >= threshold`. With `noisy` the predictive sd
/// includes the observation noise.
pub fn compute_safe_set(
    safety: &[&OutputPrediction],
    thresholds: &[f64],
    candidates: &[usize],
    beta: f64,
    noisy: bool,
) -> Result<SafeSet> {
    if safety.len() != thresholds.len() {
        return Err(Error::Dimension(format!("{} safety outputs, {} thresholds", safety.len(), thresholds.len())));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Input(format!("beta must be finite and non-negative, got {beta}")));
    }
    let sb = beta.sqrt();
    let mut members: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| {
            safety.iter().zip(thresholds).all(|(p, t)| {
                let v = p.var[i].max(0.0) + if noisy { p.noise_variance } else { 0.0 };
                p.mean[i] - sb * v.sqrt() >= *t
            })
        })
        .collect();
    members.sort_unstable();
    Ok(SafeSet { members, beta })
}

/// Joint Gaussian entropy of independent outputs at each pool index.
pub fn acquisition_scores(outputs: &[&OutputPrediction]) -> Vec<f64> {
    let n = outputs.first().map_or(0, |p| p.var.len());
    let c = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    (0..n)
        .map(|i| outputs.iter().map(|p| 0.5 * (c + p.var[i].max(VARIANCE_FLOOR).ln())).sum())
        .collect()
}

/// Highest-scoring member of the safe set; ties go to the lowest index.
pub fn select_query(scores: &[f64], safe: &SafeSet) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &i in &safe.members {
        match best {
            Some(b) if scores[i] <= scores[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Sal,
    FullHgp,
    FullLmc,
    EffHgp,
    EffLmc,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sal, Method::FullHgp, Method::FullLmc, Method::EffHgp, Method::EffLmc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sal => "sal",
            Method::FullHgp => "full_hgp",
            Method::FullLmc => "full_lmc",
            Method::EffHgp => "eff_hgp",
            Method::EffLmc => "eff_lmc",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn uses_sources(self) -> bool {
        self != Method::Sal
    }
}

#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub method: Method,
    pub n_query: usize,
    pub beta: f64,
    /// Include observation noise in the safety margin.
    pub noisy_safe_set: bool,
    /// Refit hyperparameters every this many iterations (conditioning
    /// always happens).
    pub refit_every: usize,
    pub family: KernelFamily,
    /// Options of the first fit.
    pub fit: FitOptions,
    /// Starts of later fits, the warm start included.
    pub refit_restarts: usize,
    /// When false the initial hyperparameters are kept throughout.
    pub optimize: bool,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            method: Method::Sal,
            n_query: 50,
            beta: 4.0,
            noisy_safe_set: true,
            refit_every: 1,
            family: KernelFamily::Matern52,
            fit: FitOptions { restarts: 3, ..FitOptions::default() },
            refit_restarts: 1,
            optimize: true,
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and non-negative, got {}", self.beta)));
        }
        if self.refit_every == 0 {
            return Err(Error::Config("refit_every must be at least 1".into()));
        }
        if self.fit.restarts == 0 || self.refit_restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.method == Method::EffLmc {
            return Err(Error::Config(
                "unsupported combination: source precomputation needs the hierarchical kernel (eff_lmc)".into(),
            ));
        }
        Ok(())
    }
}

/// Hyperparameters of a single-task safety model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyParams {
    pub lengthscales: Vec<f64>,
    pub scale: f64,
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub query_index: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
    /// Safety of the observed (noisy) draw.
    pub safe_truth: bool,
    pub safe_set_size: usize,
    /// Main-output error on the test points, from the model used to pick
    /// this query.
    pub rmse: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub region_label: Option<usize>,
    pub fit_seconds: f64,
    /// One entry per safety output, single-task models only.
    pub safety_params: Vec<SafetyParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TraceStatus {
    Completed,
    SafeSetExhausted,
    FitFailed(String),
}

impl TraceStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TraceStatus::Completed => "completed",
            TraceStatus::SafeSetExhausted => "safe_set_exhausted",
            TraceStatus::FitFailed(_) => "fit_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTrace {
    pub method: Method,
    pub seed: u64,
    pub n_initial: usize,
    pub beta: f64,
    pub thresholds: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub status: TraceStatus,
    /// Initial target inputs, needed to replay the data for post-hoc checks.
    pub initial_x: Vec<Vec<f64>>,
    pub initial_z: Vec<Vec<f64>>,
    pub total_seconds: f64,
}

impl ExperimentTrace {
    pub fn safe_query_ratio(&self) -> Result<f64> {
        crate::metrics::safe_query_ratio(&self.records.iter().map(|r| r.safe_truth).collect::<Vec<_>>())
    }

    /// Distinct region labels of queried points (label 0, unsafe, excluded).
    pub fn explored_regions(&self) -> usize {
        let mut labels: Vec<usize> = self.records.iter().filter_map(|r| r.region_label).filter(|l| *l > 0).collect();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn fit_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.fit_seconds).sum()
    }
}
