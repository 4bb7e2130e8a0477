use nalgebra::DMatrix;

use crate::kernels::Component;

/// Contractions of `W = alpha alpha^T - Omega^{-1}` against the kernel terms of
/// `Omega = sum_c B_c ∘ K_c + noise`.
pub(crate) struct ComponentGrads {
    /// `d LML / d log l_{c,d}` for every component and input dimension.
    pub lengthscale: Vec<Vec<f64>>,
    /// `G_c[a, b] = sum_{i in a, j in b} W_ij K_c(x_i, x_j)`.
    pub blocks: Vec<DMatrix<f64>>,
}

impl ComponentGrads {
    /// `d LML / d log scale_c` for a component whose scale multiplies `K_c`.
    pub fn log_scale(&self, c: usize, b: &DMatrix<f64>) -> f64 {
        0.5 * self.blocks[c].component_mul(b).sum()
    }
}

pub(crate) fn component_grads(cs: &[Component], x: &DMatrix<f64>, tasks: &[usize], w: &DMatrix<f64>) -> ComponentGrads {
    let n = x.nrows();
    let t = cs.first().map_or(1, |c| c.b.nrows());
    let dim = x.ncols();
    let mut lengthscale: Vec<Vec<f64>> = cs.iter().map(|_| vec![0.0; dim]).collect();
    let mut blocks: Vec<DMatrix<f64>> = cs.iter().map(|_| DMatrix::zeros(t, t)).collect();
    let mut diff = vec![0.0; dim];
    for (ci, c) in cs.iter().enumerate() {
        let k = &c.kernel;
        let inv_l: Vec<f64> = k.lengthscales.iter().map(|l| 1.0 / l).collect();
        let ls = &mut lengthscale[ci];
        let blk = &mut blocks[ci];
        for j in 0..n {
            let tj = tasks[j];
            blk[(tj, tj)] += w[(j, j)] * k.scale;
            for i in (j + 1)..n {
                let ti = tasks[i];
                let mut r2 = 0.0;
                for d in 0..dim {
                    let v = (x[(i, d)] - x[(j, d)]) * inv_l[d];
                    diff[d] = v * v;
                    r2 += diff[d];
                }
                let r = r2.sqrt();
                let wij = w[(i, j)];
                let kv = k.scale * k.family.unit(r);
                blk[(ti, tj)] += wij * kv;
                blk[(tj, ti)] += wij * kv;
                let bw = c.b[(ti, tj)] * wij;
                if bw != 0.0 {
                    // both (i, j) and (j, i) contribute, cancelling the 1/2
                    let g = bw * k.scale * k.family.neg_dk_over_r(r);
                    for d in 0..dim {
                        ls[d] += g * diff[d];
                    }
                }
            }
        }
    }
    ComponentGrads { lengthscale, blocks }
}
