use serde::Serialize;

use super::ExperimentTrace;
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::theory::exploration;

/// Outcome of replaying a single-task trace against the local exploration
/// bound: every query must lie within the bound's radius (in lengthscale
/// units) of some earlier observation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundCheck {
    pub checked: usize,
    /// Iterations where the observed safety values exceed the norm assumption.
    pub skipped_norm: Vec<usize>,
    /// Iterations with no valid bound for the fitted parameters.
    pub skipped_no_bound: Vec<usize>,
    /// `(iteration, scaled distance, radius)` of queries outside the radius.
    pub violations: Vec<(usize, f64, f64)>,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

fn scaled_distance(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt()
}

pub fn check_exploration_bound(trace: &ExperimentTrace, family: KernelFamily) -> Result<BoundCheck> {
    let mut out = BoundCheck::default();
    let mut xs = trace.initial_x.clone();
    let mut zs = trace.initial_z.clone();
    for r in &trace.records {
        if r.safety_params.len() != trace.thresholds.len() {
            return Err(Error::Input("trace carries no single-task safety parameters".into()));
        }
        let n = xs.len();
        let mut verdict: Option<Option<(f64, f64)>> = None;
        let mut norm_ok = true;
        for (j, (p, t)) in r.safety_params.iter().zip(&trace.thresholds).enumerate() {
            let norm = zs.iter().map(|z| z[j] * z[j]).sum::<f64>().sqrt();
            if norm > (n as f64).sqrt() {
                norm_ok = false;
                continue;
            }
            let Ok(e) = exploration(family, trace.beta, *t, n, p.noise_variance.sqrt(), p.scale) else {
                continue;
            };
            let d = xs.iter().map(|x| scaled_distance(&r.x, x, &p.lengthscales)).fold(f64::INFINITY, f64::min);
            let outside = d > e.unit_radius * (1.0 + 1e-9);
            let prev = verdict.flatten();
            verdict = Some(if outside { Some((d, e.unit_radius)) } else { prev });
        }
        match verdict {
            Some(Some((d, radius))) => {
                out.checked += 1;
                out.violations.push((r.iteration, d, radius));
            }
            Some(None) => out.checked += 1,
            None if !norm_ok => out.skipped_norm.push(r.iteration),
            None => out.skipped_no_bound.push(r.iteration),
        }
        xs.push(r.x.clone());
        zs.push(r.z.clone());
    }
    Ok(out)
}
