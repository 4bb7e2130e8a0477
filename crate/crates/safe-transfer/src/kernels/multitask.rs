use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{KernelFamily, KernelSpec};
use crate::error::{Error, Result};

/// Task of an input. Sources are numbered `1..=P`; internally tasks are laid
/// out as sources first and the target last, so `Source(p)` is index `p - 1`
/// and `Target` is index `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskTag {
    Source(usize),
    Target,
}

impl TaskTag {
    pub fn index(self, n_sources: usize) -> Result<usize> {
        match self {
            TaskTag::Target => Ok(n_sources),
            TaskTag::Source(p) if p >= 1 && p <= n_sources => Ok(p - 1),
            TaskTag::Source(p) => Err(Error::UnknownTask(format!(
                "source {p} with {n_sources} declared sources"
            ))),
        }
    }

    pub fn from_index(i: usize, n_sources: usize) -> TaskTag {
        if i == n_sources {
            TaskTag::Target
        } else {
            TaskTag::Source(i + 1)
        }
    }
}

/// One term `B ⊗ k` of a coregionalized kernel.
#[derive(Debug, Clone)]
pub struct Component {
    pub b: DMatrix<f64>,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MultiTaskKernel {
    /// `sum_l (w_l w_l^T + diag(kappa)) ⊗ k_l` with unit-scale latent kernels.
    Lmc {
        latents: Vec<KernelSpec>,
        w: Vec<Vec<f64>>,
        kappa: Vec<f64>,
    },
    /// Hierarchy of kernels: `source_kernels[i]` is shared by tasks `i..=P`,
    /// `target_kernel` is the target residual.
    Hgp {
        source_kernels: Vec<KernelSpec>,
        target_kernel: KernelSpec,
    },
}

impl MultiTaskKernel {
    /// LMC with `n_sources + 1` latents of the given family, all lengthscales
    /// set to `lengthscale`, zero `w` and unit `kappa`.
    pub fn lmc_default(family: KernelFamily, dim: usize, n_sources: usize, lengthscale: f64) -> Result<Self> {
        let t = n_sources + 1;
        let latents = (0..t)
            .map(|_| KernelSpec::iso(family, dim, lengthscale, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Self::lmc(latents, vec![vec![0.0; t]; t], vec![1.0; t])
    }

    pub fn lmc(latents: Vec<KernelSpec>, w: Vec<Vec<f64>>, kappa: Vec<f64>) -> Result<Self> {
        let t = kappa.len();
        if t < 2 {
            return Err(Error::Input("LMC needs at least one source and the target".into()));
        }
        if latents.is_empty() || w.len() != latents.len() || w.iter().any(|c| c.len() != t) {
            return Err(Error::Input(format!(
                "LMC needs one w column of length {t} per latent ({} latents, {} columns)",
                latents.len(),
                w.len()
            )));
        }
        if latents.iter().any(|k| k.scale != 1.0) {
            return Err(Error::Input("LMC latent kernels must have unit scale".into()));
        }
        if kappa.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::Input("LMC kappa entries must be positive".into()));
        }
        check_same_dim(&latents)?;
        Ok(MultiTaskKernel::Lmc { latents, w, kappa })
    }

    pub fn hgp(source_kernels: Vec<KernelSpec>, target_kernel: KernelSpec) -> Result<Self> {
        if source_kernels.is_empty() {
            return Err(Error::Input("HGP needs at least one source kernel".into()));
        }
        let mut all = source_kernels.clone();
        all.push(target_kernel.clone());
        check_same_dim(&all)?;
        Ok(MultiTaskKernel::Hgp { source_kernels, target_kernel })
    }

    pub fn n_sources(&self) -> usize {
        match self {
            MultiTaskKernel::Lmc { kappa, .. } => kappa.len() - 1,
            MultiTaskKernel::Hgp { source_kernels, .. } => source_kernels.len(),
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.n_sources() + 1
    }

    pub fn dim(&self) -> usize {
        match self {
            MultiTaskKernel::Lmc { latents, .. } => latents[0].dim(),
            MultiTaskKernel::Hgp { target_kernel, .. } => target_kernel.dim(),
        }
    }

    pub fn components(&self) -> Vec<Component> {
        let t = self.n_tasks();
        match self {
            MultiTaskKernel::Lmc { latents, w, kappa } => latents
                .iter()
                .zip(w)
                .map(|(k, wl)| Component {
                    b: DMatrix::from_fn(t, t, |a, b| wl[a] * wl[b] + if a == b { kappa[a] } else { 0.0 }),
                    kernel: k.clone(),
                })
                .collect(),
            MultiTaskKernel::Hgp { source_kernels, target_kernel } => {
                let mut out: Vec<Component> = source_kernels
                    .iter()
                    .enumerate()
                    .map(|(i, k)| Component {
                        b: DMatrix::from_fn(t, t, |a, b| if a >= i && b >= i { 1.0 } else { 0.0 }),
                        kernel: k.clone(),
                    })
                    .collect();
                out.push(Component {
                    b: DMatrix::from_fn(t, t, |a, b| if a == t - 1 && b == t - 1 { 1.0 } else { 0.0 }),
                    kernel: target_kernel.clone(),
                });
                out
            }
        }
    }

    /// Single-task kernel seen by the target alone (`k(x, x')` at target/target).
    pub fn target_diagonal(&self) -> Vec<Component> {
        let t = self.n_tasks() - 1;
        self.components()
            .into_iter()
            .map(|c| Component { b: DMatrix::from_element(1, 1, c.b[(t, t)]), kernel: c.kernel })
            .collect()
    }

    pub fn eval(&self, x: &[f64], a: TaskTag, xp: &[f64], b: TaskTag) -> Result<f64> {
        let p = self.n_sources();
        let (ia, ib) = (a.index(p)?, b.index(p)?);
        eval_components(&self.components(), x, ia, xp, ib)
    }

    /// Covariance matrix between two task-labelled point sets (task indices,
    /// sources first, target last).
    pub fn matrix(
        &self,
        x: &DMatrix<f64>,
        tx: &[usize],
        xp: &DMatrix<f64>,
        txp: &[usize],
    ) -> Result<DMatrix<f64>> {
        components_matrix(&self.components(), x, tx, xp, txp)
    }
}

fn check_same_dim(ks: &[KernelSpec]) -> Result<()> {
    let d = ks[0].dim();
    if ks.iter().any(|k| k.dim() != d) {
        return Err(Error::Dimension("all kernels must share the input dimension".into()));
    }
    Ok(())
}

pub fn eval_components(cs: &[Component], x: &[f64], a: usize, xp: &[f64], b: usize) -> Result<f64> {
    let mut s = 0.0;
    for c in cs {
        if a >= c.b.nrows() || b >= c.b.nrows() {
            return Err(Error::UnknownTask(format!("task index {a}/{b}")));
        }
        let w = c.b[(a, b)];
        if w != 0.0 {
            s += w * c.kernel.eval(x, xp)?;
        }
    }
    Ok(s)
}

pub fn components_matrix(
    cs: &[Component],
    x: &DMatrix<f64>,
    tx: &[usize],
    xp: &DMatrix<f64>,
    txp: &[usize],
) -> Result<DMatrix<f64>> {
    if tx.len() != x.nrows() || txp.len() != xp.nrows() {
        return Err(Error::Dimension("one task index per input row required".into()));
    }
    let t = cs[0].b.nrows();
    if tx.iter().chain(txp).any(|&i| i >= t) {
        return Err(Error::UnknownTask(format!("task index beyond {t} tasks")));
    }
    let mut out = DMatrix::zeros(x.nrows(), xp.nrows());
    for c in cs {
        c.kernel.check_inputs(x)?;
        c.kernel.check_inputs(xp)?;
        for j in 0..xp.nrows() {
            for i in 0..x.nrows() {
                let w = c.b[(tx[i], txp[j])];
                if w != 0.0 {
                    out[(i, j)] += w * c.kernel.eval_rows(x, i, xp, j);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k(f: KernelFamily, l: f64, s: f64) -> KernelSpec {
        KernelSpec::new(f, vec![l], s).unwrap()
    }

    #[test]
    fn lmc_zero_w_diagonal_and_cross() {
        let m = MultiTaskKernel::lmc_default(KernelFamily::Rbf, 1, 1, 0.5).unwrap();
        let v = m.eval(&[0.3], TaskTag::Source(1), &[0.3], TaskTag::Source(1)).unwrap();
        assert_eq!(v, 2.0);
        let c = m.eval(&[0.3], TaskTag::Source(1), &[0.1], TaskTag::Target).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn hgp_target_target_is_sum() {
        let m = MultiTaskKernel::hgp(vec![k(KernelFamily::Matern52, 0.4, 1.0)], k(KernelFamily::Rbf, 0.2, 1.0)).unwrap();
        assert_eq!(m.eval(&[0.5], TaskTag::Target, &[0.5], TaskTag::Target).unwrap(), 2.0);
        let ks = k(KernelFamily::Matern52, 0.4, 1.0).eval(&[0.5], &[0.9]).unwrap();
        assert_eq!(m.eval(&[0.5], TaskTag::Source(1), &[0.9], TaskTag::Target).unwrap(), ks);
        assert_eq!(m.eval(&[0.5], TaskTag::Source(1), &[0.9], TaskTag::Source(1)).unwrap(), ks);
    }

    #[test]
    fn unknown_task_rejected() {
        let m = MultiTaskKernel::lmc_default(KernelFamily::Rbf, 1, 1, 0.5).unwrap();
        assert!(matches!(
            m.eval(&[0.0], TaskTag::Source(2), &[0.0], TaskTag::Target),
            Err(Error::UnknownTask(_))
        ));
        assert!(m.eval(&[0.0], TaskTag::Source(0), &[0.0], TaskTag::Target).is_err());
    }

    #[test]
    fn lmc_rejects_scaled_latents() {
        let r = MultiTaskKernel::lmc(vec![k(KernelFamily::Rbf, 1.0, 2.0)], vec![vec![1.0, 1.0]], vec![1.0, 1.0]);
        assert!(r.is_err());
    }

    #[test]
    fn hgp_equals_explicit_coregionalization() {
        let ks = k(KernelFamily::Matern32, 0.7, 1.3);
        let kt = k(KernelFamily::Rbf, 0.3, 0.4);
        let m = MultiTaskKernel::hgp(vec![ks.clone()], kt.clone()).unwrap();
        let explicit = vec![
            Component { b: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]), kernel: ks },
            Component { b: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]), kernel: kt },
        ];
        for (x, y) in [(0.0, 0.0), (0.1, 0.5), (-1.0, 0.3)] {
            for a in 0..2 {
                for b in 0..2 {
                    let want = eval_components(&explicit, &[x], a, &[y], b).unwrap();
                    let got = m.eval(&[x], TaskTag::from_index(a, 1), &[y], TaskTag::from_index(b, 1)).unwrap();
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn multi_source_hgp_structure() {
        let ks: Vec<_> = (0..2).map(|i| k(KernelFamily::Rbf, 0.5 + i as f64, 1.0 + i as f64)).collect();
        let kt = k(KernelFamily::Rbf, 0.2, 0.5);
        let m = MultiTaskKernel::hgp(ks.clone(), kt.clone()).unwrap();
        let (x, y) = ([0.1], [0.4]);
        let k0 = ks[0].eval(&x, &y).unwrap();
        let k1 = ks[1].eval(&x, &y).unwrap();
        let k2 = kt.eval(&x, &y).unwrap();
        let e = |a, b| m.eval(&x, a, &y, b).unwrap();
        use TaskTag::*;
        assert_eq!(e(Source(1), Source(1)), k0);
        assert_eq!(e(Source(1), Source(2)), k0);
        assert_eq!(e(Source(2), Source(2)), k0 + k1);
        assert_eq!(e(Source(2), Target), k0 + k1);
        assert_eq!(e(Source(1), Target), k0);
        assert!((e(Target, Target) - (k0 + k1 + k2)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn multitask_gram_symmetric_psd(
            pts in prop::collection::vec(-2.0..2.0f64, 4..30),
            w in prop::collection::vec(-1.5..1.5f64, 9),
            kap in prop::collection::vec(0.01..2.0f64, 3),
            hgp in any::<bool>(),
        ) {
            let n = pts.len();
            let x = DMatrix::from_column_slice(n, 1, &pts);
            let tasks: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let m = if hgp {
                MultiTaskKernel::hgp(
                    vec![k(KernelFamily::Matern52, 0.5, 1.0), k(KernelFamily::Rbf, 0.3, 0.5)],
                    k(KernelFamily::Matern32, 0.2, 0.3),
                ).unwrap()
            } else {
                let lat = (0..3).map(|i| k(KernelFamily::ALL[i], 0.3 + 0.2 * i as f64, 1.0)).collect();
                MultiTaskKernel::lmc(lat, w.chunks(3).map(|c| c.to_vec()).collect(), kap).unwrap()
            };
            let g = m.matrix(&x, &tasks, &x, &tasks).unwrap();
            prop_assert!((&g - g.transpose()).amax() == 0.0);
            let ev = g.clone().symmetric_eigenvalues();
            prop_assert!(ev.min() >= -1e-8 * g.trace());
        }
    }
}
