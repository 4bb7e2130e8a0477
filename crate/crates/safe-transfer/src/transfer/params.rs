//! Flat parameter vectors for transfer-model fitting.
//!
//! HGP: `[log l, log scale]` per component (sources then target residual),
//! then `log noise` per task. LMC: `log l` per latent, then `w` per latent,
//! then `log kappa` per task, then `log noise` per task.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{MultiTaskData, TransferModel};
use crate::error::Result;
use crate::gp::grad::component_grads;
use crate::gp::{lengthscale_init_range, log_uniform, Bounds, NOISE_INIT, SCALE_INIT};
use crate::kernels::{KernelSpec, MultiTaskKernel};

pub(crate) const W_BOUND: f64 = 30.0;

pub(crate) fn pack(m: &TransferModel) -> Vec<f64> {
    let mut p = Vec::new();
    match &m.kernel {
        MultiTaskKernel::Hgp { source_kernels, target_kernel } => {
            for k in source_kernels.iter().chain([target_kernel]) {
                p.extend(k.lengthscales.iter().map(|l| l.ln()));
                p.push(k.scale.ln());
            }
        }
        MultiTaskKernel::Lmc { latents, w, kappa } => {
            for k in latents {
                p.extend(k.lengthscales.iter().map(|l| l.ln()));
            }
            for wl in w {
                p.extend(wl);
            }
            p.extend(kappa.iter().map(|k| k.ln()));
        }
    }
    p.extend(m.source_noise.iter().map(|v| v.ln()));
    p.push(m.target_noise.ln());
    p
}

pub(crate) fn unpack(m: &TransferModel, p: &[f64]) -> Result<TransferModel> {
    let d = m.kernel.dim();
    let t = m.kernel.n_tasks();
    let mut at = 0;
    let mut take = |n: usize| {
        let s = &p[at..at + n];
        at += n;
        s.to_vec()
    };
    let kernel = match &m.kernel {
        MultiTaskKernel::Hgp { source_kernels, target_kernel } => {
            let mut ks = Vec::new();
            for k in source_kernels.iter().chain([target_kernel]) {
                let ls = take(d).iter().map(|v| v.exp()).collect();
                let s = take(1)[0].exp();
                ks.push(KernelSpec::new(k.family, ls, s)?);
            }
            let tk = ks.pop().expect("target kernel");
            MultiTaskKernel::hgp(ks, tk)?
        }
        MultiTaskKernel::Lmc { latents, w, .. } => {
            let mut lat = Vec::new();
            for k in latents {
                lat.push(KernelSpec::new(k.family, take(d).iter().map(|v| v.exp()).collect(), 1.0)?);
            }
            let w: Vec<Vec<f64>> = (0..w.len()).map(|_| take(t)).collect();
            let kappa = take(t).iter().map(|v| v.exp()).collect();
            MultiTaskKernel::lmc(lat, w, kappa)?
        }
    };
    let noise: Vec<f64> = take(t).iter().map(|v| v.exp()).collect();
    let mut out = TransferModel::new(kernel, noise[..t - 1].to_vec(), noise[t - 1])?;
    out.source_cache = m.source_cache.clone();
    Ok(out)
}

pub(crate) fn bounds(m: &TransferModel, b: &Bounds) -> (Vec<f64>, Vec<f64>) {
    let d = m.kernel.dim();
    let t = m.kernel.n_tasks();
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    let mut push = |n: usize, (a, c): (f64, f64)| {
        lo.extend(std::iter::repeat(a).take(n));
        hi.extend(std::iter::repeat(c).take(n));
    };
    let ln = |(a, c): (f64, f64)| (a.ln(), c.ln());
    match &m.kernel {
        MultiTaskKernel::Hgp { source_kernels, .. } => {
            for _ in 0..=source_kernels.len() {
                push(d, ln(b.lengthscale));
                push(1, ln(b.scale));
            }
        }
        MultiTaskKernel::Lmc { latents, .. } => {
            push(d * latents.len(), ln(b.lengthscale));
            push(t * latents.len(), (-W_BOUND, W_BOUND));
            push(t, ln(b.scale));
        }
    }
    push(t, ln(b.noise));
    (lo, hi)
}

pub(crate) fn draw(m: &TransferModel, span: &[f64], b: &Bounds, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = m.kernel.n_tasks();
    let mut p = Vec::new();
    let ls = |p: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
        for s in span {
            let (a, c) = lengthscale_init_range(*s, b);
            p.push(log_uniform(rng, a, c));
        }
    };
    match &m.kernel {
        MultiTaskKernel::Hgp { source_kernels, .. } => {
            for _ in 0..=source_kernels.len() {
                ls(&mut p, rng);
                p.push(log_uniform(rng, SCALE_INIT.0, SCALE_INIT.1));
            }
        }
        MultiTaskKernel::Lmc { latents, .. } => {
            for _ in latents {
                ls(&mut p, rng);
            }
            for _ in 0..latents.len() * t {
                p.push(rng.gen_range(-1.0..1.0));
            }
            for _ in 0..t {
                p.push(log_uniform(rng, 0.01, 0.5));
            }
        }
    }
    for _ in 0..t {
        p.push(log_uniform(rng, NOISE_INIT.0, NOISE_INIT.1));
    }
    p
}

/// Gradient of the joint LML with respect to `pack` coordinates, given
/// `w = alpha alpha^T - Omega^{-1}`.
pub(crate) fn gradient(m: &TransferModel, data: &MultiTaskData, w: &DMatrix<f64>) -> Vec<f64> {
    let comps = m.kernel.components();
    let cg = component_grads(&comps, &data.x, &data.tasks, w);
    let t = m.kernel.n_tasks();
    let mut g = Vec::new();
    match &m.kernel {
        MultiTaskKernel::Hgp { .. } => {
            for (c, comp) in comps.iter().enumerate() {
                g.extend(&cg.lengthscale[c]);
                g.push(cg.log_scale(c, &comp.b));
            }
        }
        MultiTaskKernel::Lmc { w: wl, kappa, .. } => {
            for ls in &cg.lengthscale {
                g.extend(ls);
            }
            for (l, col) in wl.iter().enumerate() {
                let gb = &cg.blocks[l];
                for mi in 0..t {
                    g.push((0..t).map(|b| gb[(mi, b)] * col[b]).sum());
                }
            }
            for mi in 0..t {
                g.push(cg.blocks.iter().map(|gb| 0.5 * gb[(mi, mi)] * kappa[mi]).sum());
            }
        }
    }
    let mut diag = vec![0.0; t];
    for (i, task) in data.tasks.iter().enumerate() {
        diag[*task] += w[(i, i)];
    }
    for (task, s) in diag.iter().enumerate() {
        g.push(0.5 * m.noise(task) * s);
    }
    g
}
