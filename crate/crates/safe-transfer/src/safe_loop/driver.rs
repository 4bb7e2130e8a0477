use std::time::Instant;

use super::learner::{Inputs, Learner, SingleTask, Transfer};
use super::{
    acquisition_scores, compute_safe_set, select_query, ExperimentTrace, IterationRecord, LoopConfig, Method,
    OutputPrediction, TraceStatus,
};
use crate::datasets::{Benchmark, RMSE_TEST_POINTS};
use crate::error::{Error, Result};
use crate::metrics::{rmse, tp_fp_area};
use crate::transfer::TransferModel;

/// Runs the loop with the method named in `cfg`.
pub fn run(b: &Benchmark, cfg: &LoopConfig) -> Result<ExperimentTrace> {
    match cfg.method {
        Method::Sal => run_sal(b, cfg),
        Method::FullHgp | Method::FullLmc => run_full_transfer(b, cfg),
        Method::EffHgp | Method::EffLmc => run_modular_transfer(b, cfg),
    }
}

pub fn run_sal(b: &Benchmark, cfg: &LoopConfig) -> Result<ExperimentTrace> {
    let cfg = LoopConfig { method: Method::Sal, ..cfg.clone() };
    cfg.validate()?;
    let (test_x, test_f) = b.test_points(RMSE_TEST_POINTS)?;
    let learner = SingleTask::new(b, &cfg, test_x)?;
    drive(b, &cfg, Box::new(learner), &test_f)
}

/// Transfer loop refitting every parameter on the joint data.
pub fn run_full_transfer(b: &Benchmark, cfg: &LoopConfig) -> Result<ExperimentTrace> {
    if !matches!(cfg.method, Method::FullHgp | Method::FullLmc) {
        return Err(Error::Config(format!("{} is not a full transfer method", cfg.method.name())));
    }
    run_transfer(b, cfg, None)
}

/// Transfer loop with the source block fitted and factorised once.
pub fn run_modular_transfer(b: &Benchmark, cfg: &LoopConfig) -> Result<ExperimentTrace> {
    if !matches!(cfg.method, Method::EffHgp | Method::EffLmc) {
        return Err(Error::Config(format!("{} is not a modular transfer method", cfg.method.name())));
    }
    run_transfer(b, cfg, None)
}

/// Transfer loop starting from the given models (one per distinct output).
pub(crate) fn run_transfer(b: &Benchmark, cfg: &LoopConfig, models: Option<Vec<TransferModel>>) -> Result<ExperimentTrace> {
    cfg.validate()?;
    if b.sources.is_empty() {
        return Err(Error::Config("transfer methods need at least one source dataset".into()));
    }
    let (test_x, test_f) = b.test_points(RMSE_TEST_POINTS)?;
    let start = Instant::now();
    match Transfer::new(b, cfg, test_x, models) {
        Ok(l) => {
            let mut t = drive(b, cfg, Box::new(l), &test_f)?;
            t.total_seconds = start.elapsed().as_secs_f64();
            Ok(t)
        }
        Err(e @ (Error::Fit(_) | Error::NotPositiveDefinite { .. })) => {
            let mut t = empty_trace(b, cfg);
            t.status = TraceStatus::FitFailed(e.to_string());
            Ok(t)
        }
        Err(e) => Err(e),
    }
}

fn empty_trace(b: &Benchmark, cfg: &LoopConfig) -> ExperimentTrace {
    ExperimentTrace {
        method: cfg.method,
        seed: cfg.seed,
        n_initial: b.initial.len(),
        beta: cfg.beta,
        thresholds: b.thresholds.clone(),
        records: Vec::new(),
        status: TraceStatus::Completed,
        initial_x: (0..b.initial.len()).map(|i| b.initial.row(i)).collect(),
        initial_z: (0..b.initial.len()).map(|i| b.initial.z.row(i).iter().copied().collect()).collect(),
        total_seconds: 0.0,
    }
}

fn drive(b: &Benchmark, cfg: &LoopConfig, mut learner: Box<dyn Learner>, test_f: &[f64]) -> Result<ExperimentTrace> {
    let start = Instant::now();
    let mut trace = empty_trace(b, cfg);
    let mut oracle = b.target_oracle()?;
    let mut pool = b.pool.clone();
    let true_safe = b.true_safe_mask()?;
    let mut data = b.initial.clone();
    let n_out = 1 + b.n_safety();

    for it in 0..cfg.n_query {
        let refit = it % cfg.refit_every == 0;
        let t0 = Instant::now();
        if let Err(e) = learner.update(&data, it, refit) {
            trace.status = TraceStatus::FitFailed(e.to_string());
            break;
        }
        let fit_seconds = t0.elapsed().as_secs_f64();

        let preds: Vec<OutputPrediction> = (0..n_out).map(|g| learner.predict(g, Inputs::Pool)).collect::<Result<_>>()?;
        let safety: Vec<&OutputPrediction> = preds[1..].iter().collect();
        let safe = compute_safe_set(&safety, &b.thresholds, &pool.alive_indices(), cfg.beta, cfg.noisy_safe_set)?;
        let scores = acquisition_scores(&preds.iter().collect::<Vec<_>>());
        let Some(idx) = select_query(&scores, &safe) else {
            trace.status = TraceStatus::SafeSetExhausted;
            break;
        };

        let (tp, fp) = tp_fp_area(&safe.members, &true_safe)?;
        let main_test = learner.predict(0, Inputs::Test)?;
        let err = rmse(main_test.mean.as_slice(), test_f)?;

        let x = pool.point(idx);
        let (y, z) = oracle.query(&x)?;
        let region_label = match &b.regions {
            Some(r) => Some(r.label_of(&x)?),
            None => None,
        };
        trace.records.push(IterationRecord {
            iteration: it,
            query_index: idx,
            safe_truth: oracle.is_safe(&z),
            x: x.clone(),
            y,
            z: z.clone(),
            safe_set_size: safe.len(),
            rmse: err,
            tp_rate: tp,
            fp_rate: fp,
            region_label,
            fit_seconds,
            safety_params: learner.safety_params(),
        });
        data.push(&x, y, &z)?;
        pool.remove(idx)?;
    }
    trace.total_seconds = start.elapsed().as_secs_f64();
    Ok(trace)
}
