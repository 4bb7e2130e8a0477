//! Stationary base kernels and the distance/covariance relations used by the
//! local exploration bound.

pub(crate) mod multitask;

pub use multitask::{Component, MultiTaskKernel, TaskTag};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    Rbf,
    Matern12,
    Matern32,
    Matern52,
}

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Rbf,
        KernelFamily::Matern12,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', '/'], "").as_str() {
            "rbf" | "se" | "squaredexponential" => Some(KernelFamily::Rbf),
            "matern12" | "exponential" => Some(KernelFamily::Matern12),
            "matern32" => Some(KernelFamily::Matern32),
            "matern52" => Some(KernelFamily::Matern52),
            _ => None,
        }
    }

    /// Unit-scale kernel value at scaled distance `r >= 0`.
    pub fn unit(self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self {
            KernelFamily::Rbf => (-0.5 * r * r).exp(),
            KernelFamily::Matern12 => (-r).exp(),
            KernelFamily::Matern32 => {
                let s = SQRT3 * r;
                (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern52 => {
                let s = SQRT5 * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// `-k'(r) / r` for the unit kernel. With this, the derivative of the
    /// kernel with respect to `log l_d` is `scale * g(r) * (dx_d / l_d)^2`.
    /// Matern12 is not differentiable at 0; the limit of the full derivative is
    /// 0 there, which the caller gets by multiplying with `dx_d^2 = 0`.
    pub fn neg_dk_over_r(self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self {
            KernelFamily::Rbf => (-0.5 * r * r).exp(),
            KernelFamily::Matern12 => {
                if r == 0.0 {
                    0.0
                } else {
                    (-r).exp() / r
                }
            }
            KernelFamily::Matern32 => 3.0 * (-SQRT3 * r).exp(),
            KernelFamily::Matern52 => 5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp(),
        }
    }
}

/// Smallest distance (in lengthscale units) at which the unit-scale kernel
/// drops to `delta` or below.
pub fn radius_for_delta(family: KernelFamily, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Input(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(match family {
        KernelFamily::Rbf => (2.0 * (1.0 / delta).ln()).sqrt(),
        KernelFamily::Matern12 => (1.0 / delta).ln(),
        KernelFamily::Matern32 | KernelFamily::Matern52 => {
            let (mut lo, mut hi) = (0.0_f64, 50.0_f64);
            if family.unit(hi) > delta {
                return Err(Error::Input(format!("delta {delta} below kernel value at r = 50")));
            }
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                if family.unit(mid) <= delta {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub scale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, scale: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::Input("kernel needs at least one lengthscale".into()));
        }
        if lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Input(format!("lengthscales must be positive: {lengthscales:?}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Input(format!("scale must be positive, got {scale}")));
        }
        Ok(KernelSpec { family, lengthscales, scale })
    }

    /// Isotropic kernel over `dim` inputs.
    pub fn iso(family: KernelFamily, dim: usize, lengthscale: f64, scale: f64) -> Result<Self> {
        Self::new(family, vec![lengthscale; dim], scale)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        if x.len() != self.dim() || xp.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "kernel has {} dims, got points of {} and {}",
                self.dim(),
                x.len(),
                xp.len()
            )));
        }
        let r2: f64 = x
            .iter()
            .zip(xp)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        Ok(self.scale * self.family.unit(r2.sqrt()))
    }

    /// Scaled distance between row `i` of `a` and row `j` of `b`; no checks.
    #[inline]
    pub(crate) fn scaled_dist(&self, a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
        let mut r2 = 0.0;
        for (d, l) in self.lengthscales.iter().enumerate() {
            let t = (a[(i, d)] - b[(j, d)]) / l;
            r2 += t * t;
        }
        r2.max(0.0).sqrt()
    }

    #[inline]
    pub(crate) fn eval_rows(&self, a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
        self.scale * self.family.unit(self.scaled_dist(a, i, b, j))
    }

    pub fn check_inputs(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "kernel has {} dims, inputs have {} columns",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn kernel_matrix(&self, x: &DMatrix<f64>, xp: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_inputs(x)?;
        self.check_inputs(xp)?;
        Ok(DMatrix::from_fn(x.nrows(), xp.nrows(), |i, j| self.eval_rows(x, i, xp, j)))
    }

    /// Symmetric Gram matrix of one point set; computes each pair once.
    pub fn gram(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_inputs(x)?;
        let n = x.nrows();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            k[(j, j)] = self.scale;
            for i in (j + 1)..n {
                let v = self.eval_rows(x, i, x, j);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }
}
